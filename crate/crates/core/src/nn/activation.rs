use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn relu_forward(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// Gradient of ReLU given its forward input; the subgradient at 0 is 0.
pub fn relu_backward(input: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    input.ensure_same_shape(upstream, "relu backward")?;
    let data = input
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Ok(Tensor::from_parts(input.shape().to_vec(), data))
}

/// `(-log softmax(logits)[label], softmax(logits) - onehot(label))`, computed
/// with log-sum-exp stabilization.
pub fn softmax_cross_entropy(logits: &Tensor, label: usize) -> Result<(f64, Tensor)> {
    let (loss, grad) = softmax_ce_raw(logits.data(), label)?;
    Ok((loss, Tensor::from_parts(logits.shape().to_vec(), grad)))
}

pub(crate) fn softmax_ce_raw(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::InvalidLabel {
            label,
            classes: logits.len(),
        });
    }
    let top = (0..logits.len())
        .fold(0, |best, i| if logits[i] > logits[best] { i } else { best });
    let max = logits[top];
    // log(sum exp(z - max)) = log1p(sum over the non-max terms)
    let rest: f64 = logits
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != top)
        .map(|(_, &z)| (z - max).exp())
        .sum();
    let log_sum = rest.ln_1p();
    let log_z = max + log_sum;
    let loss = (max - logits[label]) + log_sum;
    let mut grad: Vec<f64> = logits.iter().map(|&z| (z - log_z).exp()).collect();
    grad[label] -= 1.0;
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_logits() {
        let (loss, g) = softmax_cross_entropy(&Tensor::from_slice(&[0.0, 0.0]).unwrap(), 0).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((g.data()[0] + 0.5).abs() < 1e-15 && (g.data()[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn confident_logits() {
        let (loss, _) = softmax_cross_entropy(&Tensor::from_slice(&[10.0, -10.0]).unwrap(), 0).unwrap();
        // log(1 + e^-20)
        let expected = (-20.0_f64).exp().ln_1p();
        assert!((loss - expected).abs() <= 1e-12 * expected);
        assert!((loss - 2.061e-9).abs() < 1e-12);
        assert!(loss >= 0.0);
    }

    #[test]
    fn label_out_of_range() {
        assert!(matches!(
            softmax_cross_entropy(&Tensor::zeros(&[2]), 2),
            Err(Error::InvalidLabel { label: 2, classes: 2 })
        ));
    }

    #[test]
    fn relu_pair() {
        let x = Tensor::from_slice(&[-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu_forward(&x).data(), &[0.0, 0.0, 2.0]);
        let g = relu_backward(&x, &Tensor::filled(&[3], 3.0)).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 3.0]);
    }
}
