//! Fully connected layer `y_j = sum_i x_i W[i, j] + b_j`, with `W` stored as
//! `[in_features, out_features]`.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub(crate) fn forward_raw(x: &[f64], weights: &[f64], bias: &[f64]) -> Vec<f64> {
    let out = bias.len();
    let mut y = bias.to_vec();
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        let row = &weights[i * out..(i + 1) * out];
        y.iter_mut().zip(row).for_each(|(yj, &w)| *yj += xi * w);
    }
    y
}

/// Accumulates weight/bias gradients and optionally returns `dL/dx`.
pub(crate) fn backward_raw(
    x: &[f64],
    weights: &[f64],
    upstream: &[f64],
    grad_w: &mut [f64],
    grad_b: &mut [f64],
    need_input: bool,
) -> Option<Vec<f64>> {
    let out = upstream.len();
    for (i, &xi) in x.iter().enumerate() {
        // ReLU outputs are mostly zero; their rows get no gradient.
        if xi == 0.0 {
            continue;
        }
        let row = &mut grad_w[i * out..(i + 1) * out];
        row.iter_mut().zip(upstream).for_each(|(g, &d)| *g += xi * d);
    }
    grad_b.iter_mut().zip(upstream).for_each(|(g, &d)| *g += d);
    need_input.then(|| {
        weights
            .chunks_exact(out)
            .map(|row| row.iter().zip(upstream).map(|(w, d)| w * d).sum())
            .collect()
    })
}

fn check(x: &Tensor, weights: &Tensor, out_len: usize) -> Result<(usize, usize)> {
    let (fin, fout) = match *weights.shape() {
        [i, o] => (i, o),
        ref s => return Err(Error::Shape(format!("dense weights must be 2-d, got {s:?}"))),
    };
    if x.len() != fin {
        return Err(Error::Shape(format!(
            "dense input has {} features, weights expect {fin}",
            x.len()
        )));
    }
    if out_len != fout {
        return Err(Error::Shape(format!(
            "dense output has {out_len} features, weights expect {fout}"
        )));
    }
    Ok((fin, fout))
}

pub fn dense_forward(x: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (_, fout) = check(x, weights, bias.len())?;
    Ok(Tensor::from_parts(vec![fout], forward_raw(x.data(), weights.data(), bias.data())))
}

/// Returns `(dL/dx, dL/dW, dL/db)`.
pub fn dense_backward(x: &Tensor, weights: &Tensor, upstream: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let (fin, fout) = check(x, weights, upstream.len())?;
    let mut gw = vec![0.0; fin * fout];
    let mut gb = vec![0.0; fout];
    let gx = backward_raw(x.data(), weights.data(), upstream.data(), &mut gw, &mut gb, true)
        .expect("input gradient requested");
    Ok((
        Tensor::from_parts(x.shape().to_vec(), gx),
        Tensor::from_parts(vec![fin, fout], gw),
        Tensor::from_parts(vec![fout], gb),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weights() {
        let x = Tensor::from_slice(&[1.0, -2.0, 3.0]).unwrap();
        let mut w = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            w.data_mut()[i * 3 + i] = 1.0;
        }
        let y = dense_forward(&x, &w, &Tensor::zeros(&[3])).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn transpose_rule_gradients() {
        let x = Tensor::from_slice(&[1.0, 2.0]).unwrap();
        let w = Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let dy = Tensor::from_slice(&[1.0, 0.0, -1.0]).unwrap();
        let (dx, dw, db) = dense_backward(&x, &w, &dy).unwrap();
        assert_eq!(dx.data(), &[1.0 - 3.0, 4.0 - 6.0]);
        assert_eq!(dw.data(), &[1.0, 0.0, -1.0, 2.0, 0.0, -2.0]);
        assert_eq!(db.data(), dy.data());
        assert!(dense_forward(&Tensor::zeros(&[3]), &w, &Tensor::zeros(&[3])).is_err());
        assert!(dense_forward(&x, &w, &Tensor::zeros(&[2])).is_err());
    }
}
