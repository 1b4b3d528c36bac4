//! Geometric augmentation: rotation and affine maps on polylines, elastic
//! distortion on rasters.

use rand::Rng;

use super::geometry::{Point, Polyline};
use super::raster::BinaryImage;
use super::{gaussian_kernel, AugmentParams};

const CENTER: f64 = 0.5;

fn map_points(line: &Polyline, f: impl Fn(f64, f64) -> Point) -> Polyline {
    Polyline {
        points: line.points.iter().map(|p| f(p[0] - CENTER, p[1] - CENTER)).collect(),
        closed: line.closed,
    }
}

/// Rotation by `angle` radians about the frame center.
pub fn rotate(line: &Polyline, angle: f64) -> Polyline {
    let (s, c) = angle.sin_cos();
    map_points(line, |dx, dy| [CENTER + c * dx - s * dy, CENTER + s * dx + c * dy])
}

/// `[[sx, shear], [0, sy]]` about the frame center.
pub fn affine_transform(line: &Polyline, shear: f64, sx: f64, sy: f64) -> Polyline {
    map_points(line, |dx, dy| [CENTER + sx * dx + shear * dy, CENTER + sy * dy])
}

fn symmetric<R: Rng>(rng: &mut R, max: f64) -> f64 {
    if max > 0.0 {
        rng.random_range(-max..=max)
    } else {
        0.0
    }
}

fn in_range<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

pub fn random_rotation<R: Rng>(line: &Polyline, params: &AugmentParams, rng: &mut R) -> Polyline {
    rotate(line, symmetric(rng, params.rotation_max))
}

pub fn random_affine<R: Rng>(line: &Polyline, params: &AugmentParams, rng: &mut R) -> Polyline {
    let shear = symmetric(rng, params.shear_max);
    let sx = in_range(rng, params.scale_range);
    let sy = in_range(rng, params.scale_range);
    affine_transform(line, shear, sx, sy)
}

/// Separable smoothing with edge clamping.
fn smooth(field: &[f64], n: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as i64;
    let clamp = |i: i64| i.clamp(0, n as i64 - 1) as usize;
    let mut tmp = vec![0.0; n * n];
    for row in 0..n {
        for col in 0..n {
            tmp[row * n + col] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * field[row * n + clamp(col as i64 + k as i64 - r)])
                .sum();
        }
    }
    let mut out = vec![0.0; n * n];
    for row in 0..n {
        for col in 0..n {
            out[row * n + col] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * tmp[clamp(row as i64 + k as i64 - r) * n + col])
                .sum();
        }
    }
    out
}

/// Uniform per-pixel displacements smoothed with a Gaussian of width `sigma`,
/// scaled by `alpha`, then nearest-neighbor resampling. Pulls from outside the
/// frame read as background.
pub fn elastic_distort<R: Rng>(image: &BinaryImage, sigma: f64, alpha: f64, rng: &mut R) -> BinaryImage {
    let n = image.size();
    let mut dx: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let mut dy: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..=1.0)).collect();
    if alpha == 0.0 {
        return image.clone();
    }
    let kernel = gaussian_kernel(sigma);
    dx = smooth(&dx, n, &kernel);
    dy = smooth(&dy, n, &kernel);
    let mut out = BinaryImage::zeros(n);
    for row in 0..n {
        for col in 0..n {
            let i = row * n + col;
            let sr = (row as f64 + alpha * dy[i]).round();
            let sc = (col as f64 + alpha * dx[i]).round();
            if sr >= 0.0 && sc >= 0.0 && (sr as usize) < n && (sc as usize) < n && image.get(sr as usize, sc as usize) == 1 {
                out.set(row as i64, col as i64);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curvegen::raster::rasterize;
    use crate::seed;
    use std::collections::HashSet;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn identity_parameters() {
        let line = Polyline::closed(vec![[0.2, 0.3], [0.7, 0.1], [0.5, 0.9]]);
        let close = |a: &Polyline| {
            a.points
                .iter()
                .zip(&line.points)
                .all(|(p, q)| (p[0] - q[0]).abs() < 1e-15 && (p[1] - q[1]).abs() < 1e-15)
        };
        assert!(close(&rotate(&line, 0.0)));
        assert!(close(&affine_transform(&line, 0.0, 1.0, 1.0)));
        let p = AugmentParams::identity();
        let mut rng = seed::rng(1);
        let out = random_affine(&random_rotation(&line, &p, &mut rng), &p, &mut rng);
        assert!(close(&out));
        assert_eq!(rasterize(&out, 100).unwrap(), rasterize(&line, 100).unwrap());
        let img = rasterize(&line, 100).unwrap();
        assert_eq!(elastic_distort(&img, 4.0, 0.0, &mut rng), img);
    }

    #[test]
    fn quarter_turn_transposes_a_bar() {
        let bar = Polyline::open(vec![[0.2, 0.5], [0.8, 0.5]]);
        let a = rasterize(&bar, 100).unwrap();
        let b = rasterize(&rotate(&bar, FRAC_PI_2), 100).unwrap();
        let transposed: HashSet<(usize, usize)> = a.foreground().into_iter().map(|(r, c)| (c, r)).collect();
        let got: HashSet<(usize, usize)> = b.foreground().into_iter().collect();
        assert_eq!(got.len(), transposed.len());
        for (r, c) in got {
            assert!(transposed.iter().any(|&(tr, tc)| tr.abs_diff(r) <= 1 && tc.abs_diff(c) <= 1));
        }
    }

    #[test]
    fn affine_scales_about_center() {
        let line = Polyline::open(vec![[0.0, 0.0], [1.0, 1.0]]);
        let out = affine_transform(&line, 0.5, 2.0, 0.5);
        assert_eq!(out.points[0], [0.5 - 1.0 - 0.25, 0.25]);
        assert_eq!(out.points[1], [0.5 + 1.0 + 0.25, 0.75]);
    }

    #[test]
    fn elastic_preserves_foreground_mass() {
        let tri = Polyline::closed(vec![[0.1, 0.1], [0.9, 0.3], [0.35, 0.85]]);
        let img = rasterize(&tri, 100).unwrap();
        let base = img.foreground_count() as f64;
        let mut total = 0.0;
        let trials = 20;
        for s in 0..trials {
            let out = elastic_distort(&img, 4.0, 8.0, &mut seed::rng(s));
            let ratio = out.foreground_count() as f64 / base;
            assert!((0.7..=1.3).contains(&ratio), "seed {s}: {ratio}");
            total += ratio;
        }
        assert!((total / trials as f64 - 1.0).abs() < 0.3);
    }
}
