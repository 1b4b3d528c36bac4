//! Shaky-curve noise: a smooth random displacement along the local normal.

use rand::Rng;
use rand_distr::StandardNormal;

use super::geometry::{arc_length, Polyline};
use super::{gaussian_kernel, AugmentParams};

/// Displacements are clamped to this many RMS amplitudes.
pub const CLAMP_FACTOR: f64 = 3.0;

/// The wavelength is taken as the full width at half maximum of the
/// smoothing Gaussian.
const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949;

fn normals(line: &Polyline) -> Vec<[f64; 2]> {
    let n = line.len();
    let p = &line.points;
    (0..n)
        .map(|i| {
            let (prev, next) = if line.closed {
                (p[(i + n - 1) % n], p[(i + 1) % n])
            } else {
                (p[i.saturating_sub(1)], p[(i + 1).min(n - 1)])
            };
            let (tx, ty) = (next[0] - prev[0], next[1] - prev[1]);
            let len = tx.hypot(ty);
            if len == 0.0 {
                [0.0, 0.0]
            } else {
                [-ty / len, tx / len]
            }
        })
        .collect()
}

/// Gaussian-smoothed white noise over the point index, circular for closed
/// curves, with `sigma` in index units.
fn smooth_field<R: Rng>(n: usize, sigma: f64, closed: bool, rng: &mut R) -> Vec<f64> {
    let noise: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as i64;
    (0..n as i64)
        .map(|i| {
            kernel
                .iter()
                .enumerate()
                .filter_map(|(k, w)| {
                    let j = i + k as i64 - r;
                    let j = if closed {
                        j.rem_euclid(n as i64)
                    } else if (0..n as i64).contains(&j) {
                        j
                    } else {
                        return None;
                    };
                    Some(w * noise[j as usize])
                })
                .sum()
        })
        .collect()
}

/// Per-point normal displacements in pixels: RMS equal to the amplitude,
/// clamped at `CLAMP_FACTOR` times it.
pub fn displacement_field<R: Rng>(line: &Polyline, params: &AugmentParams, px_per_unit: f64, rng: &mut R) -> Vec<f64> {
    let n = line.len();
    let amplitude = params.shaky_amplitude;
    if n < 2 || amplitude == 0.0 {
        return vec![0.0; n];
    }
    let segments = if line.closed { n } else { n - 1 };
    let spacing_px = arc_length(line) * px_per_unit / segments as f64;
    let sigma = if spacing_px > 0.0 { params.shaky_wavelength / FWHM_PER_SIGMA / spacing_px } else { 0.0 };
    let mut field = smooth_field(n, sigma, line.closed, rng);
    let rms = (field.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    if rms == 0.0 {
        return vec![0.0; n];
    }
    let limit = CLAMP_FACTOR * amplitude;
    for v in &mut field {
        *v = (*v * amplitude / rms).clamp(-limit, limit);
    }
    field
}

/// Moves each point along its normal by a smooth random field. Expects the
/// polyline to be densified to about one pixel spacing.
pub fn shaky_perturb<R: Rng>(line: &Polyline, params: &AugmentParams, px_per_unit: f64, rng: &mut R) -> Polyline {
    let field = displacement_field(line, params, px_per_unit, rng);
    let normals = normals(line);
    let points = line
        .points
        .iter()
        .zip(normals.iter().zip(&field))
        .map(|(p, (nrm, d))| {
            let d = d / px_per_unit;
            [p[0] + d * nrm[0], p[1] + d * nrm[1]]
        })
        .collect();
    Polyline {
        points,
        closed: line.closed,
    }
}
