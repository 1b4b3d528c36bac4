//! Binary rasters and polyline rasterization.

use super::geometry::{Point, Polyline};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Fraction of the side left blank on each border of the unit square.
pub const MARGIN: f64 = 0.1;

#[derive(Clone, PartialEq, Eq)]
pub struct BinaryImage {
    size: usize,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for BinaryImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BinaryImage({0}x{0}, {1} on)", self.size, self.foreground_count())
    }
}

impl BinaryImage {
    pub fn zeros(size: usize) -> Self {
        BinaryImage {
            size,
            pixels: vec![0; size * size],
        }
    }

    /// Row-major pixels, each 0 or 1.
    pub fn from_pixels(size: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != size * size {
            return Err(Error::Shape(format!(
                "{} pixels for a {size}x{size} image",
                pixels.len()
            )));
        }
        if pixels.iter().any(|&p| p > 1) {
            return Err(Error::InvalidInput("binary image pixels must be 0 or 1".into()));
        }
        Ok(BinaryImage { size, pixels })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.size + col]
    }

    /// Sets a pixel; coordinates outside the grid are ignored.
    pub fn set(&mut self, row: i64, col: i64) {
        let n = self.size as i64;
        if (0..n).contains(&row) && (0..n).contains(&col) {
            self.pixels[(row * n + col) as usize] = 1;
        }
    }

    pub fn foreground_count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p == 1).count()
    }

    pub fn foreground(&self) -> Vec<(usize, usize)> {
        (0..self.pixels.len())
            .filter(|&i| self.pixels[i] == 1)
            .map(|i| (i / self.size, i % self.size))
            .collect()
    }

    /// `[1, size, size]` tensor of 0.0 / 1.0.
    pub fn to_tensor(&self) -> Tensor {
        let data = self.pixels.iter().map(|&p| p as f64).collect();
        Tensor::new(vec![1, self.size, self.size], data).expect("image size is nonzero")
    }

    /// Count of horizontal plus vertical 0/1 transitions.
    pub fn total_variation(&self) -> usize {
        let n = self.size;
        let mut tv = 0;
        for r in 0..n {
            for c in 0..n {
                let p = self.get(r, c);
                if c + 1 < n && p != self.get(r, c + 1) {
                    tv += 1;
                }
                if r + 1 < n && p != self.get(r + 1, c) {
                    tv += 1;
                }
            }
        }
        tv
    }
}

/// Pixels per unit length for a `size` grid.
pub fn pixels_per_unit(size: usize) -> f64 {
    size as f64 * (1.0 - 2.0 * MARGIN)
}

/// Unit coordinates to `(row, col)`; `x` runs along columns, `y` down rows.
pub fn to_pixel(p: Point, size: usize) -> (i64, i64) {
    let offset = size as f64 * MARGIN;
    let scale = pixels_per_unit(size);
    ((offset + p[1] * scale).round() as i64, (offset + p[0] * scale).round() as i64)
}

fn bresenham(img: &mut BinaryImage, (r0, c0): (i64, i64), (r1, c1): (i64, i64)) {
    let dc = (c1 - c0).abs();
    let dr = -(r1 - r0).abs();
    let sc = if c0 < c1 { 1 } else { -1 };
    let sr = if r0 < r1 { 1 } else { -1 };
    let (mut r, mut c, mut err) = (r0, c0, dc + dr);
    loop {
        img.set(r, c);
        if r == r1 && c == c1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dr {
            err += dr;
            c += sc;
        }
        if e2 <= dc {
            err += dc;
            r += sr;
        }
    }
}

/// One-pixel 8-connected stroke through consecutive points. Parts of the
/// curve outside the frame are clipped.
pub fn rasterize(line: &Polyline, size: usize) -> Result<BinaryImage> {
    if line.is_empty() {
        return Err(Error::InvalidInput("cannot rasterize an empty polyline".into()));
    }
    if size == 0 {
        return Err(Error::InvalidParameter("image size must be positive".into()));
    }
    if line.points.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(Error::InvalidInput("polyline has non-finite coordinates".into()));
    }
    let mut img = BinaryImage::zeros(size);
    if line.len() == 1 {
        let (r, c) = to_pixel(line.points[0], size);
        img.set(r, c);
        return Ok(img);
    }
    for (a, b) in line.segments() {
        bresenham(&mut img, to_pixel(a, size), to_pixel(b, size));
    }
    Ok(img)
}
