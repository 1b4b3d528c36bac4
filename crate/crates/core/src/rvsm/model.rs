//! What the optimizers need from a model: named parameters, a minibatch
//! gradient of the mean loss, and an evaluation pass.

use rayon::prelude::*;

use crate::dataset::Example;
use crate::error::{Error, Result};
use crate::nn::{Gradients, Network, ParamSet};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    /// Classification accuracy, for models that classify.
    pub accuracy: Option<f64>,
}

pub trait Model: Clone + Send + Sync {
    type Sample: Sync;

    fn params(&self) -> &ParamSet;
    fn params_mut(&mut self) -> &mut ParamSet;
    /// Layers owning a `<layer>.weight` parameter; candidates for thresholding.
    fn weight_layer_names(&self) -> Vec<String>;
    /// Mean loss and mean gradient over a batch.
    fn loss_grad(&self, batch: &[&Self::Sample]) -> Result<(f64, Gradients)>;
    fn evaluate(&self, samples: &[Self::Sample]) -> Result<Evaluation>;
}

impl Model for Network {
    type Sample = Example;

    fn params(&self) -> &ParamSet {
        Network::params(self)
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        Network::params_mut(self)
    }

    fn weight_layer_names(&self) -> Vec<String> {
        Network::weight_layer_names(self)
    }

    fn loss_grad(&self, batch: &[&Example]) -> Result<(f64, Gradients)> {
        self.batch_loss_grad(batch)
    }

    fn evaluate(&self, samples: &[Example]) -> Result<Evaluation> {
        let (loss, accuracy) = Network::evaluate(self, samples)?;
        Ok(Evaluation {
            loss,
            accuracy: Some(accuracy),
        })
    }
}

/// One regression observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Regression {
    pub features: Vec<f64>,
    pub target: f64,
}

/// A single dense layer without bias under least squares,
/// `f(w) = mean (x . w - y)^2 / 2`. Used to check the optimizer on a smooth
/// problem where full-batch iterates can be followed exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRegression {
    params: ParamSet,
}

impl LinearRegression {
    pub const LAYER: &'static str = "dense";
    pub const WEIGHT: &'static str = "dense.weight";

    pub fn new(weights: Tensor) -> Self {
        let mut params = ParamSet::new();
        params.insert(Self::WEIGHT, weights);
        LinearRegression { params }
    }

    pub fn weights(&self) -> &Tensor {
        self.params.get(Self::WEIGHT).expect("weight present")
    }

    fn residual(&self, s: &Regression) -> Result<f64> {
        let w = self.weights().data();
        if s.features.len() != w.len() {
            return Err(Error::Shape(format!(
                "sample has {} features, model has {}",
                s.features.len(),
                w.len()
            )));
        }
        Ok(s.features.iter().zip(w).map(|(x, w)| x * w).sum::<f64>() - s.target)
    }
}

impl Model for LinearRegression {
    type Sample = Regression;

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn weight_layer_names(&self) -> Vec<String> {
        vec![Self::LAYER.to_string()]
    }

    fn loss_grad(&self, batch: &[&Regression]) -> Result<(f64, Gradients)> {
        if batch.is_empty() {
            return Err(Error::InvalidInput("empty batch".into()));
        }
        let d = self.weights().len();
        let mut grad = vec![0.0; d];
        let mut loss = 0.0;
        for s in batch {
            let r = self.residual(s)?;
            loss += 0.5 * r * r;
            grad.iter_mut().zip(&s.features).for_each(|(g, x)| *g += r * x);
        }
        let n = batch.len() as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        let mut grads = ParamSet::new();
        grads.insert(Self::WEIGHT, Tensor::from_parts(vec![d], grad));
        Ok((loss / n, grads))
    }

    fn evaluate(&self, samples: &[Regression]) -> Result<Evaluation> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("empty evaluation set".into()));
        }
        let total = samples
            .par_iter()
            .map(|s| self.residual(s).map(|r| 0.5 * r * r))
            .collect::<Result<Vec<_>>>()?
            .iter()
            .sum::<f64>();
        Ok(Evaluation {
            loss: total / samples.len() as f64,
            accuracy: None,
        })
    }
}

/// Least-squares toy problem: `n` samples of `d` Gaussian features with
/// standard deviation `feature_std`, targets from a planted sparse weight
/// vector plus small noise. Returns the samples and the planted weights.
pub fn synthetic_regression(n: usize, d: usize, feature_std: f64, seed: u64) -> (Vec<Regression>, Tensor) {
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    let mut rng = crate::seed::rng(crate::seed::derive(seed, "regression"));
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let planted: Vec<f64> = (0..d)
        .map(|i| match i % 4 {
            0 => 1.5 - 0.1 * i as f64,
            1 => -1.0,
            _ => 0.0,
        })
        .collect();
    let samples = (0..n)
        .map(|_| {
            let features: Vec<f64> = (0..d).map(|_| feature_std * normal.sample(&mut rng)).collect();
            let clean: f64 = features.iter().zip(&planted).map(|(x, w)| x * w).sum();
            let target = clean + 0.1 * rng.random_range(-1.0..1.0);
            Regression { features, target }
        })
        .collect();
    (samples, Tensor::from_parts(vec![d], planted))
}
