//! 2x2 / stride-2 max pooling in ceil mode: odd trailing rows and columns
//! form partial windows, so 25 pools to 13.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Output extent of one pooling stage.
pub fn pooled_size(n: usize) -> usize {
    n.div_ceil(2)
}

/// Flat input position of each output's maximum, recorded by the forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolIndices {
    input_shape: [usize; 3],
    argmax: Vec<usize>,
}

impl PoolIndices {
    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn output_shape(&self) -> [usize; 3] {
        let [c, h, w] = self.input_shape;
        [c, pooled_size(h), pooled_size(w)]
    }

    pub fn argmax(&self) -> &[usize] {
        &self.argmax
    }
}

pub(crate) fn forward_raw(input: &[f64], (c, h, w): (usize, usize, usize)) -> (Vec<f64>, Vec<usize>) {
    let (oh, ow) = (pooled_size(h), pooled_size(w));
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut idx = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let base = ch * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + 2 * oy * w + 2 * ox;
                let mut best_val = input[best];
                // Row-major scan with strict `>`: the first maximum wins ties.
                for y in 2 * oy..(2 * oy + 2).min(h) {
                    for x in 2 * ox..(2 * ox + 2).min(w) {
                        let i = base + y * w + x;
                        if input[i] > best_val {
                            best = i;
                            best_val = input[i];
                        }
                    }
                }
                out.push(best_val);
                idx.push(best);
            }
        }
    }
    (out, idx)
}

pub fn maxpool_forward(input: &Tensor) -> Result<(Tensor, PoolIndices)> {
    let [c, h, w] = match *input.shape() {
        [c, h, w] => [c, h, w],
        ref s => return Err(Error::Shape(format!("pool input must be [C,H,W], got {s:?}"))),
    };
    let (out, argmax) = forward_raw(input.data(), (c, h, w));
    Ok((
        Tensor::from_parts(vec![c, pooled_size(h), pooled_size(w)], out),
        PoolIndices {
            input_shape: [c, h, w],
            argmax,
        },
    ))
}

pub(crate) fn backward_raw(argmax: &[usize], input_len: usize, upstream: &[f64]) -> Vec<f64> {
    let mut grad = vec![0.0; input_len];
    for (&i, &g) in argmax.iter().zip(upstream) {
        grad[i] += g;
    }
    grad
}

/// Routes each upstream value to the recorded argmax of its window.
pub fn maxpool_backward(indices: &PoolIndices, upstream: &Tensor) -> Result<Tensor> {
    let expected = indices.output_shape();
    if upstream.shape() != expected {
        return Err(Error::Shape(format!(
            "pool upstream gradient {:?} does not match recorded output {expected:?}",
            upstream.shape()
        )));
    }
    let [c, h, w] = indices.input_shape;
    let grad = backward_raw(&indices.argmax, c * h * w, upstream.data());
    Ok(Tensor::from_parts(vec![c, h, w], grad))
}
