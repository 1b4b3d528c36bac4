//! Plain-text tables rendered from the files of a run directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::commands::{EPOCHS_CSV, EQUILIBRIUM_CSV, FINAL_CSV, RUN_CONFIG, SIGN_CHANGES_CSV, SPARSITY_CSV};
use super::config::parse_config_text;
use crate::error::{Error, Result};
use crate::metrics::format_percent;

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn column(&self, row: &[String], name: &str) -> String {
        self.header
            .iter()
            .position(|h| h == name)
            .and_then(|i| row.get(i).cloned())
            .unwrap_or_default()
    }
}

fn read_table(path: &Path) -> Result<Table> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let fail = |e: csv::Error| Error::Format(format!("{}: {e}", path.display()));
    let header = r.headers().map_err(fail)?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect()).map_err(fail))
        .collect::<Result<Vec<Vec<String>>>>()?;
    Ok(Table { header, rows })
}

fn optional_table(path: &Path) -> Result<Option<Table>> {
    if path.exists() {
        read_table(path).map(Some)
    } else {
        Ok(None)
    }
}

/// A fraction as a percentage with three significant digits; blank stays blank.
fn pct(raw: &str) -> Result<String> {
    if raw.is_empty() {
        return Ok("-".into());
    }
    let v: f64 = raw
        .parse()
        .map_err(|_| Error::Format(format!("expected a number, got `{raw}`")))?;
    Ok(format_percent(100.0 * v))
}

fn aligned(out: &mut String, rows: &[Vec<String>]) {
    let widths: Vec<usize> = (0..rows.iter().map(Vec::len).max().unwrap_or(0))
        .map(|i| rows.iter().filter_map(|r| r.get(i)).map(String::len).max().unwrap_or(0))
        .collect();
    for row in rows {
        let line: Vec<String> = row.iter().enumerate().map(|(i, c)| format!("{c:<w$}", w = widths[i])).collect();
        let _ = writeln!(out, "  {}", line.join("  ").trim_end());
    }
}

pub fn render(run: &Path) -> Result<String> {
    let cfg_path = run.join(RUN_CONFIG);
    let cfg_text = std::fs::read_to_string(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
    let cfg: BTreeMap<String, String> = parse_config_text(&cfg_text)?.into_iter().collect();
    let get = |k: &str| cfg.get(k).cloned().unwrap_or_else(|| "-".into());
    let epochs = read_table(&run.join(EPOCHS_CSV))?;
    if epochs.rows.is_empty() {
        return Err(Error::Format(format!("{}: no epochs recorded", run.join(EPOCHS_CSV).display())));
    }

    let mut out = String::new();
    let penalty = get("penalty");
    let a = if penalty == "tl1" { get("a") } else { "-".into() };
    let _ = writeln!(out, "run {}", run.display());
    let _ = writeln!(
        out,
        "algorithm {}  penalty {penalty}  lambda {}  beta {}  a {a}  eta {}  epochs {}  batch_size {}  seed {}",
        get("algorithm"),
        get("lambda"),
        get("beta"),
        get("eta"),
        get("epochs"),
        get("batch_size"),
        get("seed"),
    );

    if let Some(sp) = optional_table(&run.join(SPARSITY_CSV))? {
        let final_acc = match optional_table(&run.join(FINAL_CSV))? {
            Some(t) => t.rows.iter().find(|r| r[0] == "test").map(|r| t.column(r, "accuracy")).unwrap_or_default(),
            None => epochs.column(epochs.rows.last().unwrap(), "accuracy"),
        };
        let _ = writeln!(out, "\nSparsity and accuracy (%)");
        let mut rows = vec![vec!["layer".to_string(), "sparsity".into(), "test accuracy".into()]];
        for r in &sp.rows {
            rows.push(vec![r[0].clone(), pct(&sp.column(r, "zero_fraction"))?, pct(&final_acc)?]);
        }
        aligned(&mut out, &rows);

        let scales: Vec<&String> = sp.header.iter().filter(|h| h.starts_with("bucket_")).collect();
        let _ = writeln!(out, "\nSparsity (%) of 10^-n scale");
        let mut head = vec!["layer".to_string()];
        head.extend(scales.iter().map(|h| format!("n={}", &h["bucket_".len()..])));
        head.push("gap".into());
        let mut rows = vec![head];
        for r in &sp.rows {
            let mut row = vec![r[0].clone()];
            for h in &scales {
                row.push(pct(&sp.column(r, h))?);
            }
            let gap = sp.column(r, "gap_indicator");
            row.push(if gap.is_empty() { "-".into() } else { gap });
            rows.push(row);
        }
        aligned(&mut out, &rows);
    }

    if let Some(sc) = optional_table(&run.join(SIGN_CHANGES_CSV))? {
        let _ = writeln!(out, "\nSign changes in convolution kernels");
        let mut rows = vec![vec!["layer".to_string(), "changed".into(), "total".into(), "percent".into()]];
        rows.extend(sc.rows.iter().map(|r| r.to_vec()));
        aligned(&mut out, &rows);
    }

    if let Some(eq) = optional_table(&run.join(EQUILIBRIUM_CSV))? {
        let _ = writeln!(out, "\nEquilibrium residuals");
        let mut rows = vec![eq.header.clone()];
        rows.extend(eq.rows.iter().cloned());
        aligned(&mut out, &rows);
    }

    if let Some(fin) = optional_table(&run.join(FINAL_CSV))? {
        let _ = writeln!(out, "\nFinal evaluation");
        let mut rows = vec![fin.header.clone()];
        rows.extend(fin.rows.iter().cloned());
        aligned(&mut out, &rows);
    }

    let _ = writeln!(out, "\nLoss by epoch");
    let mut rows = vec![epochs.header.clone()];
    rows.extend(epochs.rows.iter().cloned());
    aligned(&mut out, &rows);
    Ok(out)
}
