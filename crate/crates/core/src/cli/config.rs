//! Run configuration: one key table drives the flags, the config-file parser
//! and the defaults.
//!
//! Config files are flat `key = value` lines; `#` starts a comment. A key that
//! belongs to another subcommand is ignored so one file can serve a whole
//! experiment; a key no subcommand knows is an error. Flags win over the file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Command {
    Generate,
    Train,
    Eval,
    Report,
}

impl Command {
    pub const ALL: [Command; 4] = [Command::Generate, Command::Train, Command::Eval, Command::Report];

    pub fn name(self) -> &'static str {
        match self {
            Command::Generate => "generate",
            Command::Train => "train",
            Command::Eval => "eval",
            Command::Report => "report",
        }
    }

    pub fn about(self) -> &'static str {
        match self {
            Command::Generate => "Write a normal vs. shaky curve dataset (manifest.csv + PGM per split)",
            Command::Train => "Train the CNN with RVSM or direct penalized SGD and write run artifacts",
            Command::Eval => "Evaluate a checkpoint on a dataset split",
            Command::Report => "Print tables from a run directory",
        }
    }
}

pub struct KeyDef {
    pub name: &'static str,
    /// `None` marks a required key.
    pub default: Option<&'static str>,
    pub help: &'static str,
    pub commands: &'static [Command],
}

use Command::{Eval as E, Generate as G, Report as R, Train as T};

pub const KEYS: &[KeyDef] = &[
    KeyDef { name: "seed", default: Some("0"), help: "master seed for every random stream", commands: &[G, T] },
    KeyDef { name: "out", default: None, help: "output directory", commands: &[G, T] },
    KeyDef { name: "n_train", default: Some("5000"), help: "training samples", commands: &[G] },
    KeyDef { name: "n_test", default: Some("1000"), help: "test samples", commands: &[G] },
    KeyDef { name: "size", default: Some("100"), help: "image side in pixels", commands: &[G] },
    KeyDef { name: "rotation_max", default: Some("0.3490658503988659"), help: "max rotation, radians", commands: &[G] },
    KeyDef { name: "shear_max", default: Some("0.15"), help: "max absolute shear", commands: &[G] },
    KeyDef { name: "scale_min", default: Some("0.85"), help: "lower per-axis scale", commands: &[G] },
    KeyDef { name: "scale_max", default: Some("1.15"), help: "upper per-axis scale", commands: &[G] },
    KeyDef { name: "elastic_sigma", default: Some("4"), help: "elastic smoothing width, pixels", commands: &[G] },
    KeyDef { name: "elastic_alpha", default: Some("6"), help: "elastic magnitude, pixels", commands: &[G] },
    KeyDef { name: "shaky_amplitude", default: Some("2.5"), help: "RMS normal displacement of shaky curves, pixels", commands: &[G] },
    KeyDef { name: "shaky_wavelength", default: Some("6"), help: "correlation width of the shaky noise, pixels", commands: &[G] },
    KeyDef { name: "data", default: None, help: "dataset directory", commands: &[T, E] },
    KeyDef { name: "algorithm", default: Some("rvsm"), help: "rvsm | sgd-penalty", commands: &[T] },
    KeyDef { name: "penalty", default: Some("l0"), help: "l0 | l1 | tl1", commands: &[T] },
    KeyDef { name: "lambda", default: Some("0.0005"), help: "penalty weight", commands: &[T] },
    KeyDef { name: "beta", default: Some("0.1"), help: "splitting weight", commands: &[T] },
    KeyDef { name: "a", default: Some("1"), help: "TL1 shape parameter", commands: &[T] },
    KeyDef { name: "eta", default: Some("0.01"), help: "learning rate", commands: &[T] },
    KeyDef { name: "epochs", default: Some("20"), help: "training epochs", commands: &[T] },
    KeyDef { name: "batch_size", default: Some("32"), help: "minibatch size", commands: &[T] },
    KeyDef { name: "layers", default: Some("dense"), help: "comma-separated thresholded layers", commands: &[T] },
    KeyDef { name: "normalize_w", default: Some("false"), help: "normalize thresholded weights after each step", commands: &[T] },
    KeyDef { name: "filters", default: Some("32"), help: "filters per convolution", commands: &[T] },
    KeyDef { name: "hidden", default: Some("128"), help: "hidden dense units", commands: &[T] },
    KeyDef { name: "histogram_bins", default: Some("41"), help: "bins of the dense weight histogram", commands: &[T] },
    KeyDef { name: "checkpoint", default: None, help: "checkpoint file", commands: &[E] },
    KeyDef { name: "split", default: Some("test"), help: "train | test", commands: &[E] },
    KeyDef { name: "run", default: None, help: "run directory written by train", commands: &[R] },
];

pub fn keys_for(command: Command) -> impl Iterator<Item = &'static KeyDef> {
    KEYS.iter().filter(move |k| k.commands.contains(&command))
}

fn lookup(name: &str) -> Option<&'static KeyDef> {
    KEYS.iter().find(|k| k.name == name)
}

/// `(key, value)` pairs from config-file text, in file order.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
            key: format!("line {}", i + 1),
            message: format!("expected `key = value`, got `{line}`"),
        })?;
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        if key.is_empty() || value.is_empty() {
            return Err(Error::Config {
                key: format!("line {}", i + 1),
                message: "empty key or value".into(),
            });
        }
        out.push((key, value.to_string()));
    }
    Ok(out)
}

/// Resolved settings for one subcommand.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    values: BTreeMap<&'static str, String>,
}

impl RunConfig {
    /// Defaults, then the config file (if any), then flags.
    pub fn resolve<'a>(
        command: Command,
        file: Option<&Path>,
        flags: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<Self> {
        let mut values = BTreeMap::new();
        for k in keys_for(command) {
            if let Some(d) = k.default {
                values.insert(k.name, d.to_string());
            }
        }
        let mut cfg = RunConfig { command, values };
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            for (key, value) in parse_config_text(&text)? {
                cfg.set(&key, value, true)?;
            }
        }
        for (key, value) in flags {
            cfg.set(key, value.to_string(), false)?;
        }
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: String, lenient: bool) -> Result<()> {
        let def = lookup(key).ok_or_else(|| Error::Config {
            key: key.to_string(),
            message: "unknown key".into(),
        })?;
        if !def.commands.contains(&self.command) {
            if lenient {
                return Ok(());
            }
            return Err(Error::Config {
                key: key.to_string(),
                message: format!("not a setting of `{}`", self.command.name()),
            });
        }
        self.values.insert(def.name, value);
        Ok(())
    }

    pub fn str(&self, key: &str) -> Result<&str> {
        self.values.get(key).map(String::as_str).ok_or_else(|| Error::Config {
            key: key.to_string(),
            message: "required".into(),
        })
    }

    fn parsed<V: std::str::FromStr>(&self, key: &str, what: &str) -> Result<V> {
        let raw = self.str(key)?;
        raw.parse().map_err(|_| Error::Config {
            key: key.to_string(),
            message: format!("expected {what}, got `{raw}`"),
        })
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        let v: f64 = self.parsed(key, "a number")?;
        if !v.is_finite() {
            return Err(range(key, "must be finite"));
        }
        Ok(v)
    }

    /// A number satisfying `ok`, described by `rule` on failure.
    pub fn f64_where(&self, key: &str, rule: &str, ok: impl Fn(f64) -> bool) -> Result<f64> {
        let v = self.f64(key)?;
        if ok(v) {
            Ok(v)
        } else {
            Err(range(key, &format!("{rule}, got {v}")))
        }
    }

    pub fn u64(&self, key: &str) -> Result<u64> {
        self.parsed(key, "a nonnegative integer")
    }

    pub fn usize_at_least(&self, key: &str, min: usize) -> Result<usize> {
        let v: usize = self.parsed(key, "a nonnegative integer")?;
        if v < min {
            return Err(range(key, &format!("must be at least {min}, got {v}")));
        }
        Ok(v)
    }

    pub fn bool(&self, key: &str) -> Result<bool> {
        match self.str(key)? {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            other => Err(range(key, &format!("expected true or false, got `{other}`"))),
        }
    }

    pub fn path(&self, key: &str) -> Result<PathBuf> {
        Ok(PathBuf::from(self.str(key)?))
    }

    pub fn choice<'c>(&self, key: &str, options: &[&'c str]) -> Result<&'c str> {
        let v = self.str(key)?;
        options.iter().copied().find(|o| *o == v).ok_or_else(|| {
            range(key, &format!("expected one of {}, got `{v}`", options.join(", ")))
        })
    }

    /// `key = value` lines for every resolved key, in table order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for k in keys_for(self.command) {
            if let Some(v) = self.values.get(k.name) {
                out.push_str(&format!("{} = {v}\n", k.name));
            }
        }
        out
    }
}

fn range(key: &str, message: &str) -> Error {
    Error::Config {
        key: key.to_string(),
        message: message.to_string(),
    }
}
