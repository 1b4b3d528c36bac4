//! End-to-end runs of the `rvsm` binary on a tiny dataset.

use std::path::Path;
use std::process::{Command, Output};

fn rvsm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rvsm")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn tiny_dataset(root: &Path) -> String {
    let data = root.join("data");
    let o = rvsm(&["generate", "--out", p(&data), "--n-train", "12", "--n-test", "6", "--size", "16", "--seed", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    p(&data).to_string()
}

const TINY: [&str; 8] = ["--filters", "4", "--hidden", "8", "--epochs", "2", "--batch-size", "4"];

#[test]
fn generate_train_eval_report() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tiny_dataset(tmp.path());
    let manifest = std::fs::read_to_string(Path::new(&data).join("train/manifest.csv")).unwrap();
    assert!(manifest.starts_with("filename,label,seed\n"));
    assert_eq!(manifest.lines().count(), 13);

    let run = tmp.path().join("run");
    let mut args = vec!["train", "--data", &data, "--out", p(&run), "--penalty", "tl1", "--a", "0.5"];
    args.extend(TINY);
    let o = rvsm(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["checkpoint.rvsm", "run.cfg", "epochs.csv", "sparsity.csv", "sign_changes.csv", "equilibrium.csv", "summary.txt"] {
        assert!(run.join(f).exists(), "missing {f}");
    }
    let epochs = std::fs::read_to_string(run.join("epochs.csv")).unwrap();
    assert!(epochs.starts_with("epoch,train_loss,test_loss,accuracy,sparsity\n"), "{epochs}");
    assert_eq!(epochs.lines().count(), 3);

    let ckpt = run.join("checkpoint.rvsm");
    let o = rvsm(&["eval", "--checkpoint", p(&ckpt), "--data", &data]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("split test\nsamples 6\n"), "{text}");
    assert!(text.contains("sparsity dense "));

    let o = rvsm(&["report", "--run", p(&run)]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("penalty tl1") && text.contains("Sign changes") && text.contains("Loss by epoch"), "{text}");
}

#[test]
fn config_file_with_flag_override() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tiny_dataset(tmp.path());
    let run = tmp.path().join("run");
    let cfg = tmp.path().join("train.cfg");
    std::fs::write(
        &cfg,
        format!(
            "# tiny run\ndata = {data}\nout = {}\nfilters = 4\nhidden = 8\nbatch-size = 4\nepochs = 3\nn_train = 12\n",
            p(&run)
        ),
    )
    .unwrap();
    let o = rvsm(&["train", "--config", p(&cfg), "--epochs", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let epochs = std::fs::read_to_string(run.join("epochs.csv")).unwrap();
    assert_eq!(epochs.lines().count(), 2, "flag should override the file's epochs");

    std::fs::write(&cfg, "bogus_key = 1\n").unwrap();
    assert_eq!(rvsm(&["train", "--config", p(&cfg)]).status.code(), Some(1));
}

#[test]
fn penalized_sgd_baseline_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tiny_dataset(tmp.path());
    let run = tmp.path().join("sgd");
    let mut args = vec!["train", "--data", &data, "--out", p(&run), "--algorithm", "sgd-penalty", "--penalty", "l1"];
    args.extend(TINY);
    let o = rvsm(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!run.join("equilibrium.csv").exists());

    // the baseline has no proximal step for l0
    let run = tmp.path().join("sgd-l0");
    let mut args = vec!["train", "--data", &data, "--out", p(&run), "--algorithm", "sgd-penalty", "--penalty", "l0"];
    args.extend(TINY);
    assert_eq!(rvsm(&args).status.code(), Some(1));
}

#[test]
fn exit_codes() {
    assert_eq!(rvsm(&[]).status.code(), Some(1));
    assert_eq!(rvsm(&["train", "--lambda=-1", "--data", "x", "--out", "y"]).status.code(), Some(1));
    assert_eq!(rvsm(&["eval", "--checkpoint", "/nonexistent/c.rvsm", "--data", "/nonexistent"]).status.code(), Some(2));
    let o = rvsm(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("generate"));
}
