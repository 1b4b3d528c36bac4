//! The `rvsm` command line.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 I/O or format
//! error, 3 numerical divergence.

mod commands;
pub mod config;
mod report;

use std::ffi::OsString;
use std::io::Write;

use clap::{Arg, ArgAction};

pub use commands::{
    augment_params, penalty_spec, rvsm_config, Algorithm, CHECKPOINT, EPOCHS_CSV, EQUILIBRIUM_CSV, FINAL_CSV,
    HISTOGRAM_CSV, RUN_CONFIG, SIGN_CHANGES_CSV, SPARSITY_CSV, SUMMARY,
};
pub use config::{parse_config_text, Command, KeyDef, RunConfig, KEYS};
pub use report::render as render_report;

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Divergence { .. } => EXIT_DIVERGENCE,
        Error::Config { .. }
        | Error::InvalidParameter(_)
        | Error::UnsupportedPenalty(_)
        | Error::InvalidArchitecture(_) => EXIT_USAGE,
        _ => EXIT_IO,
    }
}

pub fn command() -> clap::Command {
    let mut cmd = clap::Command::new("rvsm")
        .about("Sparse CNN training with the relaxed variable splitting method")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true);
    for sub in Command::ALL {
        let mut sc = clap::Command::new(sub.name()).about(sub.about()).arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .help("flat `key = value` file; flags override it"),
        );
        for key in config::keys_for(sub) {
            let help = match key.default {
                Some(d) => format!("{} [default: {d}]", key.help),
                None => format!("{} (required)", key.help),
            };
            let mut arg = Arg::new(key.name)
                .long(key.name)
                .value_name("VALUE")
                .action(ArgAction::Set)
                .help(help);
            if key.name.contains('_') {
                arg = arg.alias(key.name.replace('_', "-"));
            }
            sc = sc.arg(arg);
        }
        cmd = cmd.subcommand(sc);
    }
    cmd
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit code. Errors go to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp
                | clap::error::ErrorKind::DisplayVersion
                | clap::error::ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            // help with no subcommand is still a usage error
            return if e.kind() == clap::error::ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand { EXIT_USAGE } else { code };
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand required");
    let command = Command::ALL.into_iter().find(|c| c.name() == name).expect("registered subcommand");
    let flags: Vec<(&str, &str)> = config::keys_for(command)
        .filter_map(|k| sub.get_one::<String>(k.name).map(|v| (k.name, v.as_str())))
        .collect();
    let file = sub.get_one::<String>("config").map(std::path::Path::new);

    let result = RunConfig::resolve(command, file, flags).and_then(|cfg| match command {
        Command::Generate => commands::generate(&cfg, out),
        Command::Train => commands::train(&cfg, out),
        Command::Eval => commands::eval(&cfg, out),
        Command::Report => commands::report_cmd(&cfg, out),
    });
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(std::iter::once("rvsm").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn command_definition_is_valid() {
        command().debug_assert();
    }

    #[test]
    fn usage_errors_exit_1() {
        assert_eq!(run_capture(&[]).0, EXIT_USAGE);
        assert_eq!(run_capture(&["train", "--bogus", "1"]).0, EXIT_USAGE);
        assert_eq!(run_capture(&["frobnicate"]).0, EXIT_USAGE);
        let (code, _, err) = run_capture(&["train", "--data", "x", "--out", "y", "--penalty", "l2"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("`penalty`"), "{err}");
        let (code, _, err) = run_capture(&["generate", "--out", "y", "--n-train", "1"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("n_train"), "{err}");
    }

    #[test]
    fn help_exits_0() {
        let (code, out, _) = run_capture(&["train", "--help"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("--lambda") && out.contains("[default: 0.0005]"));
    }

    #[test]
    fn missing_inputs_exit_2() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path().to_str().unwrap();
        assert_eq!(run_capture(&["report", "--run", d]).0, EXIT_IO);
        assert_eq!(run_capture(&["train", "--data", d, "--out", d]).0, EXIT_IO);
        assert_eq!(run_capture(&["train", "--config", &format!("{d}/none.cfg")]).0, EXIT_IO);
    }

    #[test]
    fn exit_code_mapping() {
        assert_eq!(exit_code(&Error::Divergence { iteration: 3, loss: f64::NAN }), EXIT_DIVERGENCE);
        assert_eq!(exit_code(&Error::Format("x".into())), EXIT_IO);
        assert_eq!(exit_code(&Error::Config { key: "k".into(), message: "m".into() }), EXIT_USAGE);
    }
}
