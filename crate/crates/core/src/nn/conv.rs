//! 3x3 same-padded cross-correlation via im2col + GEMM.
//!
//! The column matrix has one row per `(channel, ky, kx)` tap and one column per
//! output pixel, so the forward pass is `Y[O, HW] = W[O, C*9] * cols[C*9, HW]`.

use super::gemm::gemm;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub(crate) const KERNEL: usize = 3;
const TAPS: usize = KERNEL * KERNEL;

/// Fills `cols` (`C*9 x H*W`, row-major) from a `C x H x W` image.
pub(crate) fn im2col(input: &[f64], c: usize, h: usize, w: usize, cols: &mut [f64]) {
    let hw = h * w;
    debug_assert_eq!(cols.len(), c * TAPS * hw);
    for ch in 0..c {
        let plane = &input[ch * hw..(ch + 1) * hw];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = (ch * TAPS + ky * KERNEL + kx) * hw;
                let dst = &mut cols[row..row + hw];
                for y in 0..h {
                    let out = &mut dst[y * w..(y + 1) * w];
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        out.fill(0.0);
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => {
                            out[0] = 0.0;
                            out[1..].copy_from_slice(&src[..w - 1]);
                        }
                        1 => out.copy_from_slice(src),
                        _ => {
                            out[..w - 1].copy_from_slice(&src[1..]);
                            out[w - 1] = 0.0;
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-adds a column matrix back onto a `C x H x W` image.
pub(crate) fn col2im_add(cols: &[f64], c: usize, h: usize, w: usize, out: &mut [f64]) {
    let hw = h * w;
    for ch in 0..c {
        let plane = &mut out[ch * hw..(ch + 1) * hw];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = (ch * TAPS + ky * KERNEL + kx) * hw;
                let src = &cols[row..row + hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    let s = &src[y * w..(y + 1) * w];
                    match kx {
                        0 => dst[..w - 1].iter_mut().zip(&s[1..]).for_each(|(d, v)| *d += v),
                        1 => dst.iter_mut().zip(s).for_each(|(d, v)| *d += v),
                        _ => dst[1..].iter_mut().zip(&s[..w - 1]).for_each(|(d, v)| *d += v),
                    }
                }
            }
        }
    }
}

/// Forward pass on raw buffers; returns the output and the column matrix.
pub(crate) fn forward_raw(
    input: &[f64],
    (c, h, w): (usize, usize, usize),
    weights: &[f64],
    bias: &[f64],
    out_channels: usize,
) -> (Vec<f64>, Vec<f64>) {
    let hw = h * w;
    let k = c * TAPS;
    let mut cols = vec![0.0; k * hw];
    im2col(input, c, h, w, &mut cols);
    let mut out = vec![0.0; out_channels * hw];
    for (o, chunk) in out.chunks_mut(hw).enumerate() {
        chunk.fill(bias[o]);
    }
    gemm(out_channels, k, hw, 1.0, weights, (k, 1), &cols, (hw, 1), 1.0, &mut out, (hw, 1));
    (out, cols)
}

/// Backward pass on raw buffers. Weight and bias gradients are accumulated
/// into `grad_w` / `grad_b`; the input gradient is returned when requested.
#[allow(clippy::too_many_arguments)]
pub(crate) fn backward_raw(
    cols: &[f64],
    (c, h, w): (usize, usize, usize),
    weights: &[f64],
    out_channels: usize,
    upstream: &[f64],
    grad_w: &mut [f64],
    grad_b: &mut [f64],
    need_input: bool,
) -> Option<Vec<f64>> {
    let hw = h * w;
    let k = c * TAPS;
    // dW[O, K] += dY[O, HW] * cols^T[HW, K]
    gemm(out_channels, hw, k, 1.0, upstream, (hw, 1), cols, (1, hw), 1.0, grad_w, (k, 1));
    for (o, g) in grad_b.iter_mut().enumerate() {
        *g += upstream[o * hw..(o + 1) * hw].iter().sum::<f64>();
    }
    if !need_input {
        return None;
    }
    // dcols[K, HW] = W^T[K, O] * dY[O, HW]
    let mut dcols = vec![0.0; k * hw];
    gemm(k, out_channels, hw, 1.0, weights, (1, k), upstream, (hw, 1), 0.0, &mut dcols, (hw, 1));
    let mut grad_in = vec![0.0; c * hw];
    col2im_add(&dcols, c, h, w, &mut grad_in);
    Some(grad_in)
}

fn check_shapes(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<(usize, usize, usize, usize)> {
    let (c, h, w) = match *input.shape() {
        [c, h, w] => (c, h, w),
        ref s => return Err(Error::Shape(format!("conv input must be [C,H,W], got {s:?}"))),
    };
    let o = match *weights.shape() {
        [o, wc, KERNEL, KERNEL] if wc == c => o,
        ref s => {
            return Err(Error::Shape(format!(
                "conv weights must be [O,{c},3,3], got {s:?}"
            )))
        }
    };
    if bias.shape() != [o] {
        return Err(Error::Shape(format!(
            "conv bias must be [{o}], got {:?}",
            bias.shape()
        )));
    }
    Ok((c, h, w, o))
}

/// Same-padded 3x3 cross-correlation: `[C,H,W] -> [O,H,W]`.
pub fn conv2d_forward(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (c, h, w, o) = check_shapes(input, weights, bias)?;
    let (out, _) = forward_raw(input.data(), (c, h, w), weights.data(), bias.data(), o);
    Ok(Tensor::from_parts(vec![o, h, w], out))
}

/// Gradients of a convolution with respect to its input, weights and bias.
pub fn conv2d_backward(input: &Tensor, weights: &Tensor, upstream: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let o = weights.shape().first().copied().unwrap_or(0);
    let (c, h, w, o) = check_shapes(input, weights, &Tensor::zeros(&[o.max(1)]))?;
    if upstream.shape() != [o, h, w] {
        return Err(Error::Shape(format!(
            "conv upstream gradient must be [{o},{h},{w}], got {:?}",
            upstream.shape()
        )));
    }
    let mut cols = vec![0.0; c * TAPS * h * w];
    im2col(input.data(), c, h, w, &mut cols);
    let mut gw = vec![0.0; weights.len()];
    let mut gb = vec![0.0; o];
    let gi = backward_raw(&cols, (c, h, w), weights.data(), o, upstream.data(), &mut gw, &mut gb, true)
        .expect("input gradient requested");
    Ok((
        Tensor::from_parts(vec![c, h, w], gi),
        Tensor::from_parts(weights.shape().to_vec(), gw),
        Tensor::from_parts(vec![o], gb),
    ))
}
