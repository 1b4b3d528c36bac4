//! Synthetic normal vs. shaky planar curves.
//!
//! Pipeline per sample: random triangle or quadrangle, densified outline,
//! normal-direction noise for the shaky class, random rotation and affine map,
//! rasterization, elastic distortion of the raster. Every stage draws from its
//! own stream derived from the sample seed.

mod geometry;
pub mod io;
mod perturb;
mod raster;
mod transform;

use rand::Rng;
use rayon::prelude::*;

pub use geometry::{
    arc_length, densify_edges, is_convex, is_simple, max_spacing, sample_polygon, sample_polygon_with,
    segments_intersect, signed_area, Point, Polyline, ShapeKind, ShapeSpec, MIN_VERTEX_DISTANCE,
};
pub use perturb::{displacement_field, shaky_perturb, CLAMP_FACTOR};
pub use raster::{pixels_per_unit, rasterize, to_pixel, BinaryImage, MARGIN};
pub use transform::{affine_transform, elastic_distort, random_affine, random_rotation, rotate};

use crate::dataset::{Dataset, Example};
use crate::error::{Error, Result};
use crate::seed;

pub const DEFAULT_SIZE: usize = 100;
const MAX_ATTEMPTS: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Normal,
    Shaky,
}

impl Label {
    pub fn index(self) -> usize {
        match self {
            Label::Normal => 0,
            Label::Shaky => 1,
        }
    }

    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            0 => Ok(Label::Normal),
            1 => Ok(Label::Shaky),
            _ => Err(Error::InvalidLabel { label: i, classes: 2 }),
        }
    }
}

/// Augmentation and noise magnitudes; lengths are in pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentParams {
    pub rotation_max: f64,
    pub shear_max: f64,
    pub scale_range: (f64, f64),
    pub elastic_sigma: f64,
    pub elastic_alpha: f64,
    pub shaky_amplitude: f64,
    pub shaky_wavelength: f64,
}

impl Default for AugmentParams {
    fn default() -> Self {
        AugmentParams {
            rotation_max: 20f64.to_radians(),
            shear_max: 0.15,
            scale_range: (0.85, 1.15),
            elastic_sigma: 4.0,
            elastic_alpha: 6.0,
            shaky_amplitude: 2.5,
            shaky_wavelength: 6.0,
        }
    }
}

impl AugmentParams {
    /// No rotation, shear, scaling or elastic distortion.
    pub fn identity() -> Self {
        AugmentParams {
            rotation_max: 0.0,
            shear_max: 0.0,
            scale_range: (1.0, 1.0),
            elastic_alpha: 0.0,
            ..AugmentParams::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("rotation_max", self.rotation_max),
            ("shear_max", self.shear_max),
            ("elastic_sigma", self.elastic_sigma),
            ("elastic_alpha", self.elastic_alpha),
            ("shaky_amplitude", self.shaky_amplitude),
            ("shaky_wavelength", self.shaky_wavelength),
        ];
        for (name, v) in fields {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be finite and nonnegative, got {v}")));
            }
        }
        let (lo, hi) = self.scale_range;
        if !(lo > 0.5 && hi < 1.5 && lo <= hi) {
            return Err(Error::InvalidParameter(format!(
                "scale_range ({lo}, {hi}) must satisfy 0.5 < lo <= hi < 1.5"
            )));
        }
        Ok(())
    }
}

/// Normalized Gaussian taps out to three standard deviations; `[1.0]` for a
/// nonpositive width.
pub(crate) fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma.is_nan() || sigma <= 0.0 {
        return vec![1.0];
    }
    let r = (3.0 * sigma).ceil() as i64;
    let taps: Vec<f64> = (-r..=r).map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveSample {
    pub image: BinaryImage,
    pub label: Label,
    pub seed: u64,
}

impl CurveSample {
    pub fn to_example(&self) -> Example {
        Example {
            image: self.image.to_tensor(),
            label: self.label.index(),
        }
    }
}

/// Foreground pixels a sample needs: 40 at 100x100, proportionally fewer on
/// smaller grids since stroke length scales with the side.
pub fn min_foreground(size: usize) -> usize {
    (40 * size).div_ceil(DEFAULT_SIZE).max(1)
}

/// Renders one sample; a pure function of its arguments.
pub fn generate_sample(sample_seed: u64, label: Label, size: usize, params: &AugmentParams) -> Result<CurveSample> {
    params.validate()?;
    if size < 8 {
        return Err(Error::InvalidParameter(format!("image size must be at least 8, got {size}")));
    }
    let px = pixels_per_unit(size);
    for attempt in 0..MAX_ATTEMPTS {
        let s = if attempt == 0 { sample_seed } else { seed::derive_indexed(sample_seed, "retry", attempt) };
        let mut shape_rng = seed::rng(seed::derive(s, "shape"));
        let kind = if shape_rng.random_bool(0.5) { ShapeKind::Triangle } else { ShapeKind::Quadrangle };
        let spec = sample_polygon(kind, &mut shape_rng)?;
        let mut line = densify_edges(&spec.outline(), 1.0 / px)?;
        if label == Label::Shaky {
            line = shaky_perturb(&line, params, px, &mut seed::rng(seed::derive(s, "shaky")));
        }
        let mut aug_rng = seed::rng(seed::derive(s, "augment"));
        line = random_rotation(&line, params, &mut aug_rng);
        line = random_affine(&line, params, &mut aug_rng);
        let image = rasterize(&line, size)?;
        let image = elastic_distort(
            &image,
            params.elastic_sigma,
            params.elastic_alpha,
            &mut seed::rng(seed::derive(s, "elastic")),
        );
        if image.foreground_count() >= min_foreground(size) {
            return Ok(CurveSample {
                image,
                label,
                seed: sample_seed,
            });
        }
    }
    Err(Error::Generation(format!(
        "sample {sample_seed:#x} stayed below {} foreground pixels after {MAX_ATTEMPTS} attempts",
        min_foreground(size)
    )))
}

/// `n` samples of split `split`; even indices are normal, odd are shaky.
pub fn generate_split(n: usize, split: &str, size: usize, params: &AugmentParams, master: u64) -> Result<Vec<CurveSample>> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let label = if i % 2 == 0 { Label::Normal } else { Label::Shaky };
            generate_sample(seed::derive_indexed(master, split, i as u64), label, size, params)
        })
        .collect()
}

/// Train and test samples from disjoint seed streams.
pub fn generate_samples(
    n_train: usize,
    n_test: usize,
    size: usize,
    params: &AugmentParams,
    seed: u64,
) -> Result<(Vec<CurveSample>, Vec<CurveSample>)> {
    if n_train < 2 || n_test < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 samples per split, got {n_train} train / {n_test} test"
        )));
    }
    Ok((
        generate_split(n_train, "train", size, params, seed)?,
        generate_split(n_test, "test", size, params, seed)?,
    ))
}

pub fn generate_dataset(
    n_train: usize,
    n_test: usize,
    size: usize,
    params: &AugmentParams,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    let (train, test) = generate_samples(n_train, n_test, size, params, seed)?;
    Ok((to_dataset(&train)?, to_dataset(&test)?))
}

pub fn to_dataset(samples: &[CurveSample]) -> Result<Dataset> {
    Dataset::new(samples.iter().map(CurveSample::to_example).collect())
}
