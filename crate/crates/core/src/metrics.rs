//! Sparsity, scale buckets, sign changes, weight histograms and accuracy.

use std::collections::BTreeMap;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::tensor::Tensor;

/// Scales `n` of the `10^-n` buckets reported by default.
pub const DEFAULT_SCALES: [u32; 5] = [2, 3, 4, 5, 10];

/// Fraction of entries that are exactly zero (bit-level test, no epsilon).
pub fn sparsity(weights: &Tensor) -> Result<f64> {
    if weights.is_empty() {
        return Err(Error::InvalidInput("sparsity of an empty tensor".into()));
    }
    let zeros = weights.data().iter().filter(|&&x| x == 0.0).count();
    Ok(zeros as f64 / weights.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparsityReport {
    pub layer: String,
    pub zero_fraction: f64,
    /// `n -> fraction of l-inf-normalized weights with |w| < 10^-n`.
    pub buckets: BTreeMap<u32, f64>,
    /// `bucket(10) / max(bucket(4), eps)`; near 1 when small weights are
    /// genuinely zero rather than merely small.
    pub gap_indicator: f64,
}

fn linf_normalized(weights: &Tensor) -> Result<Vec<f64>> {
    let max = weights.norm_linf();
    if max == 0.0 {
        return Err(Error::DegenerateNormalization(
            "cannot l-inf normalize an all-zero tensor".into(),
        ));
    }
    Ok(weights.data().iter().map(|x| x.abs() / max).collect())
}

fn bucket(normalized: &[f64], n: u32) -> f64 {
    let level = 10f64.powi(-(n as i32));
    normalized.iter().filter(|&&x| x < level).count() as f64 / normalized.len() as f64
}

pub fn sparsity_buckets(layer: &str, weights: &Tensor, scales: &[u32]) -> Result<SparsityReport> {
    let zero_fraction = sparsity(weights)?;
    let normalized = linf_normalized(weights)?;
    let buckets = scales.iter().map(|&n| (n, bucket(&normalized, n))).collect();
    let gap_indicator = bucket(&normalized, 10) / bucket(&normalized, 4).max(f64::EPSILON);
    Ok(SparsityReport {
        layer: layer.to_string(),
        zero_fraction,
        buckets,
        gap_indicator,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignChangeReport {
    pub layer: String,
    pub changed: usize,
    pub total: usize,
    pub percent: f64,
}

impl SignChangeReport {
    pub fn from_counts(layer: &str, changed: usize, total: usize) -> Result<Self> {
        if total == 0 || changed > total {
            return Err(Error::InvalidInput(format!(
                "sign-change counts {changed}/{total} are inconsistent"
            )));
        }
        Ok(SignChangeReport {
            layer: layer.to_string(),
            changed,
            total,
            percent: 100.0 * changed as f64 / total as f64,
        })
    }
}

/// Entries whose sign flipped between `initial` and `final_`; entries that are
/// zero at either end count as unchanged.
pub fn sign_changes(layer: &str, initial: &Tensor, final_: &Tensor) -> Result<SignChangeReport> {
    initial.ensure_same_shape(final_, "sign changes")?;
    let changed = initial
        .data()
        .iter()
        .zip(final_.data())
        .filter(|(&a, &b)| a != 0.0 && b != 0.0 && (a > 0.0) != (b > 0.0))
        .count();
    SignChangeReport::from_counts(layer, changed, initial.len())
}

/// Percent with three significant digits, e.g. `25.0`, `12.2`, `8.34`.
pub fn format_percent(p: f64) -> String {
    if p == 0.0 || !p.is_finite() {
        return format!("{p:.1}");
    }
    let magnitude = p.abs().log10().floor() as i32;
    let decimals = (2 - magnitude).max(0) as usize;
    format!("{p:.decimals$}")
}

/// Fraction of examples whose arg-max logit equals the label.
pub fn accuracy(net: &Network, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidInput("accuracy of an empty dataset".into()));
    }
    Ok(net.evaluate(data.examples())?.1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramBin {
    pub center: f64,
    pub count: usize,
}

/// Equal-width histogram over `[-1, 1]` of the l-inf-normalized weights.
pub fn weight_histogram(weights: &Tensor, bins: usize) -> Result<Vec<HistogramBin>> {
    if bins < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 bins, got {bins}")));
    }
    let max = weights.norm_linf();
    if max == 0.0 {
        return Err(Error::DegenerateNormalization(
            "cannot normalize an all-zero tensor for a histogram".into(),
        ));
    }
    let width = 2.0 / bins as f64;
    let mut counts = vec![0usize; bins];
    for &w in weights.data() {
        let x = w / max;
        let i = (((x + 1.0) / width).floor() as usize).min(bins - 1);
        counts[i] += 1;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramBin {
            center: -1.0 + (i as f64 + 0.5) * width,
            count,
        })
        .collect())
}
