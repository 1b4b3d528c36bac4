//! The four subcommands. Each takes a resolved [`RunConfig`] and writes its
//! human-readable output to `out`.

use std::io::Write;
use std::path::{Path, PathBuf};

use super::config::RunConfig;
use super::report;
use crate::curvegen::{self, io as dataio, AugmentParams, CurveSample};
use crate::error::{Error, Result};
use crate::metrics::{self, DEFAULT_SCALES};
use crate::nn::{checkpoint, Network, NetworkConfig};
use crate::prox::{Penalty, PenaltySpec};
use crate::rvsm::{self, EpochRecord, EquilibriumReport, RvsmConfig};
use crate::{seed, Dataset};

pub const CHECKPOINT: &str = "checkpoint.rvsm";
pub const EPOCHS_CSV: &str = "epochs.csv";
pub const SPARSITY_CSV: &str = "sparsity.csv";
pub const SIGN_CHANGES_CSV: &str = "sign_changes.csv";
pub const EQUILIBRIUM_CSV: &str = "equilibrium.csv";
pub const FINAL_CSV: &str = "final.csv";
pub const HISTOGRAM_CSV: &str = "histogram_dense.csv";
pub const RUN_CONFIG: &str = "run.cfg";
pub const SUMMARY: &str = "summary.txt";

fn console(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Writes `rows` under `header` as an LF-terminated CSV file.
pub(crate) fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let fail = |e: csv::Error| Error::Format(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(fail)?;
    for row in rows {
        w.write_record(row).map_err(fail)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn augment_params(cfg: &RunConfig) -> Result<AugmentParams> {
    let nonneg = |k: &str| cfg.f64_where(k, "must be nonnegative", |v| v >= 0.0);
    let scale_min = cfg.f64_where("scale_min", "must lie in (0.5, 1.5)", |v| v > 0.5 && v < 1.5)?;
    let scale_max = cfg.f64_where("scale_max", "must lie in [scale_min, 1.5)", |v| v >= scale_min && v < 1.5)?;
    Ok(AugmentParams {
        rotation_max: nonneg("rotation_max")?,
        shear_max: nonneg("shear_max")?,
        scale_range: (scale_min, scale_max),
        elastic_sigma: nonneg("elastic_sigma")?,
        elastic_alpha: nonneg("elastic_alpha")?,
        shaky_amplitude: nonneg("shaky_amplitude")?,
        shaky_wavelength: nonneg("shaky_wavelength")?,
    })
}

pub fn generate(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let n_train = cfg.usize_at_least("n_train", 2)?;
    let n_test = cfg.usize_at_least("n_test", 2)?;
    let size = cfg.usize_at_least("size", 8)?;
    let params = augment_params(cfg)?;
    let master = cfg.u64("seed")?;
    let dir = cfg.path("out")?;

    let (train, test) = curvegen::generate_samples(n_train, n_test, size, &params, master)?;
    dataio::write_dataset(&dir, &train, &test)?;
    std::fs::write(dir.join(RUN_CONFIG), cfg.to_text()).map_err(|e| Error::io(dir.join(RUN_CONFIG), e))?;
    writeln!(out, "wrote {n_train} train and {n_test} test samples ({size}x{size}) to {}", dir.display()).map_err(console)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Rvsm,
    SgdPenalty,
}

pub fn penalty_spec(cfg: &RunConfig) -> Result<PenaltySpec> {
    let lambda = cfg.f64_where("lambda", "must be nonnegative", |v| v >= 0.0)?;
    let penalty = match cfg.choice("penalty", &["l0", "l1", "tl1"])? {
        "l0" => Penalty::L0,
        "l1" => Penalty::L1,
        _ => Penalty::Tl1 {
            a: cfg.f64_where("a", "must be positive", |v| v > 0.0)?,
        },
    };
    Ok(PenaltySpec { penalty, lambda })
}

/// Optimizer settings; `seed` drives the batch order.
pub fn rvsm_config(cfg: &RunConfig) -> Result<RvsmConfig> {
    let layers: Vec<String> = cfg
        .str("layers")?
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    Ok(RvsmConfig {
        eta: cfg.f64_where("eta", "must be positive", |v| v > 0.0)?,
        beta: cfg.f64_where("beta", "must be positive", |v| v > 0.0)?,
        penalty: penalty_spec(cfg)?,
        thresholded_layers: layers,
        normalize_w: cfg.bool("normalize_w")?,
        epochs: cfg.usize_at_least("epochs", 1)?,
        batch_size: cfg.usize_at_least("batch_size", 1)?,
        seed: cfg.u64("seed")?,
    })
}

fn load_split(dir: &Path) -> Result<(Vec<CurveSample>, Dataset)> {
    let samples = dataio::read_split(dir)?;
    if samples.is_empty() {
        return Err(Error::Format(format!("{}: dataset split is empty", dir.display())));
    }
    let data = curvegen::to_dataset(&samples)?;
    Ok((samples, data))
}

fn input_size(samples: &[CurveSample]) -> usize {
    samples[0].image.size()
}

struct TrainResult {
    initial: Network,
    deployed: Network,
    records: Vec<EpochRecord>,
    equilibrium: Option<EquilibriumReport>,
}

pub fn train(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let algorithm = match cfg.choice("algorithm", &["rvsm", "sgd-penalty"])? {
        "rvsm" => Algorithm::Rvsm,
        _ => Algorithm::SgdPenalty,
    };
    let rcfg = rvsm_config(cfg)?;
    if algorithm == Algorithm::SgdPenalty && rcfg.penalty.penalty == Penalty::L0 {
        return Err(Error::Config {
            key: "penalty".into(),
            message: "sgd-penalty needs l1 or tl1".into(),
        });
    }
    let filters = cfg.usize_at_least("filters", 1)?;
    let hidden = cfg.usize_at_least("hidden", 1)?;
    let bins = cfg.usize_at_least("histogram_bins", 2)?;
    let data_dir = cfg.path("data")?;
    let run_dir = cfg.path("out")?;

    let (train_s, train) = load_split(&data_dir.join(dataio::SPLITS[0]))?;
    let (test_s, test) = load_split(&data_dir.join(dataio::SPLITS[1]))?;
    let size = input_size(&train_s);
    if input_size(&test_s) != size {
        return Err(Error::Format("train and test images differ in size".into()));
    }
    let net_cfg = NetworkConfig {
        input_size: size,
        filters,
        hidden,
        ..NetworkConfig::default()
    };
    let net = Network::new(net_cfg, seed::derive(rcfg.seed, "init"))?;
    rcfg.validate(Some(&net))?;
    std::fs::create_dir_all(&run_dir).map_err(|e| Error::io(&run_dir, e))?;

    let result = run_training(algorithm, net, &rcfg, &train, &test)?;
    write_run(&run_dir, cfg, &rcfg, &result, &train, &test, bins)?;
    let text = report::render(&run_dir)?;
    std::fs::write(run_dir.join(SUMMARY), &text).map_err(|e| Error::io(run_dir.join(SUMMARY), e))?;
    out.write_all(text.as_bytes()).map_err(console)
}

fn run_training(
    algorithm: Algorithm,
    mut net: Network,
    rcfg: &RvsmConfig,
    train: &Dataset,
    test: &Dataset,
) -> Result<TrainResult> {
    let initial = net.clone();
    let progress = |r: &EpochRecord| {
        eprintln!(
            "epoch {:>3}  train_loss {:.5}  test_loss {:.5}  accuracy {:.4}  sparsity {:.4}",
            r.epoch,
            r.train_loss,
            r.test_loss.unwrap_or(f64::NAN),
            r.accuracy.unwrap_or(f64::NAN),
            r.sparsity
        )
    };
    match algorithm {
        Algorithm::Rvsm => {
            let outcome = rvsm::rvsm_train(&mut net, train.examples(), Some(test.examples()), rcfg, progress)?;
            let equilibrium = rvsm::equilibrium_residuals(rcfg, &net, &outcome.state, train.examples())?;
            Ok(TrainResult {
                initial,
                deployed: outcome.deployed,
                records: outcome.state.loss_trace,
                equilibrium: Some(equilibrium),
            })
        }
        Algorithm::SgdPenalty => {
            let records = rvsm::penalized_sgd_train(&mut net, train.examples(), Some(test.examples()), rcfg, progress)?;
            Ok(TrainResult {
                initial,
                deployed: net,
                records,
                equilibrium: None,
            })
        }
    }
}

fn write_run(
    dir: &Path,
    cfg: &RunConfig,
    rcfg: &RvsmConfig,
    result: &TrainResult,
    train: &Dataset,
    test: &Dataset,
    bins: usize,
) -> Result<()> {
    let path = |name: &str| dir.join(name);
    checkpoint::save(&path(CHECKPOINT), result.deployed.params())?;
    std::fs::write(path(RUN_CONFIG), cfg.to_text()).map_err(|e| Error::io(path(RUN_CONFIG), e))?;

    let rows: Vec<Vec<String>> = result
        .records
        .iter()
        .map(|r| {
            vec![
                r.epoch.to_string(),
                r.train_loss.to_string(),
                opt(r.test_loss),
                opt(r.accuracy),
                r.sparsity.to_string(),
            ]
        })
        .collect();
    write_csv(&path(EPOCHS_CSV), &["epoch", "train_loss", "test_loss", "accuracy", "sparsity"], &rows)?;

    let mut header = vec!["layer".to_string(), "zero_fraction".to_string()];
    header.extend(DEFAULT_SCALES.iter().map(|n| format!("bucket_{n}")));
    header.push("gap_indicator".into());
    let mut rows = Vec::new();
    for layer in &rcfg.thresholded_layers {
        let w = result.deployed.params().require(&format!("{layer}.weight"))?;
        let mut row = vec![layer.clone(), metrics::sparsity(w)?.to_string()];
        match metrics::sparsity_buckets(layer, w, &DEFAULT_SCALES) {
            Ok(rep) => {
                row.extend(rep.buckets.values().map(f64::to_string));
                row.push(rep.gap_indicator.to_string());
            }
            // an all-zero layer has no normalization; buckets are left blank
            Err(Error::DegenerateNormalization(_)) => row.extend(std::iter::repeat_n(String::new(), DEFAULT_SCALES.len() + 1)),
            Err(e) => return Err(e),
        }
        rows.push(row);
    }
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(&path(SPARSITY_CSV), &header_refs, &rows)?;

    let mut rows = Vec::new();
    for layer in result.deployed.weight_layer_names().into_iter().filter(|l| l.starts_with("conv")) {
        let key = format!("{layer}.weight");
        let rep = metrics::sign_changes(&layer, result.initial.params().require(&key)?, result.deployed.params().require(&key)?)?;
        rows.push(vec![rep.layer, rep.changed.to_string(), rep.total.to_string(), metrics::format_percent(rep.percent)]);
    }
    write_csv(&path(SIGN_CHANGES_CSV), &["layer", "changed", "total", "percent"], &rows)?;

    if let Some(eq) = &result.equilibrium {
        write_csv(
            &path(EQUILIBRIUM_CSV),
            &["u_residual", "grad_residual", "w_u_gap"],
            &[vec![eq.u_residual.to_string(), eq.grad_residual.to_string(), eq.w_u_gap.to_string()]],
        )?;
    }

    let (train_loss, train_acc) = result.deployed.evaluate(train.examples())?;
    let (test_loss, test_acc) = result.deployed.evaluate(test.examples())?;
    write_csv(
        &path(FINAL_CSV),
        &["split", "loss", "accuracy"],
        &[
            vec!["train".into(), train_loss.to_string(), train_acc.to_string()],
            vec!["test".into(), test_loss.to_string(), test_acc.to_string()],
        ],
    )?;

    let dense = result.deployed.params().require("dense.weight")?;
    let rows = match metrics::weight_histogram(dense, bins) {
        Ok(h) => h.iter().map(|b| vec![b.center.to_string(), b.count.to_string()]).collect(),
        Err(Error::DegenerateNormalization(_)) => Vec::new(),
        Err(e) => return Err(e),
    };
    write_csv(&path(HISTOGRAM_CSV), &["bin_center", "count"], &rows)
}

pub fn eval(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let split = cfg.choice("split", &dataio::SPLITS)?;
    let ckpt: PathBuf = cfg.path("checkpoint")?;
    let data_dir = cfg.path("data")?;
    let params = checkpoint::load(&ckpt)?;
    let (samples, data) = load_split(&data_dir.join(split))?;
    let net = Network::from_params(input_size(&samples), params)
        .map_err(|e| Error::Format(format!("{}: {e}", ckpt.display())))?;
    let (loss, accuracy) = net.evaluate(data.examples())?;
    let mut text = format!("split {split}\nsamples {}\naccuracy {accuracy}\nloss {loss}\n", data.len());
    for layer in net.weight_layer_names() {
        let w = net.params().require(&format!("{layer}.weight"))?;
        text.push_str(&format!("sparsity {layer} {}\n", metrics::sparsity(w)?));
    }
    out.write_all(text.as_bytes()).map_err(console)
}

pub fn report_cmd(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let text = report::render(&cfg.path("run")?)?;
    out.write_all(text.as_bytes()).map_err(console)
}
