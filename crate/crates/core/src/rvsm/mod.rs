//! Relaxed variable splitting.
//!
//! The split objective is
//!
//! ```text
//! L(u, w) = f(w) + lambda * P(u) + beta / 2 * ||w - u||^2
//! ```
//!
//! and each iteration does
//!
//! 1. `u <- T_{lambda/beta}(w)` (exact minimization in `u` by thresholding),
//! 2. `w <- w - eta * grad f(w) - eta * beta * (w - u)`, optionally followed by
//!    `w <- w / ||w||`.
//!
//! Only the thresholded layers carry a `u`; every other parameter takes a
//! plain SGD step. The deployed model uses `u` in place of `w` for those
//! layers. With minibatches, the u-step runs every iteration and the w-step
//! uses the minibatch gradient.

mod model;

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

pub use model::{synthetic_regression, Evaluation, LinearRegression, Model, Regression};

use crate::error::{Error, Result};
use crate::metrics;
use crate::prox::{penalty_value, Penalty, PenaltySpec, ThresholdContext};
use crate::tensor::Tensor;

/// Per-layer tensors keyed by layer name (not parameter name).
pub type LayerTensors = IndexMap<String, Tensor>;

fn weight_key(layer: &str) -> String {
    format!("{layer}.weight")
}

#[derive(Debug, Clone, PartialEq)]
pub struct RvsmConfig {
    pub eta: f64,
    pub beta: f64,
    pub penalty: PenaltySpec,
    pub thresholded_layers: Vec<String>,
    /// Normalize thresholded weights after each w-step (theory setting).
    pub normalize_w: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for RvsmConfig {
    fn default() -> Self {
        RvsmConfig {
            eta: 0.01,
            beta: 0.1,
            penalty: PenaltySpec {
                penalty: Penalty::L0,
                lambda: 0.0005,
            },
            thresholded_layers: vec!["dense".to_string()],
            normalize_w: false,
            epochs: 20,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl RvsmConfig {
    pub fn lambda(&self) -> f64 {
        self.penalty.lambda
    }

    pub fn context(&self) -> Result<ThresholdContext> {
        ThresholdContext::new(&self.penalty, self.beta)
    }

    pub fn gamma(&self) -> Result<f64> {
        Ok(self.context()?.gamma())
    }

    /// Checks scalar ranges and, when a model is given, that every
    /// thresholded layer exists in it.
    pub fn validate<M: Model>(&self, model: Option<&M>) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidParameter(format!("eta must be > 0, got {}", self.eta)));
        }
        PenaltySpec::new(self.penalty.penalty, self.penalty.lambda)?;
        self.context()?;
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidParameter("epochs and batch_size must be positive".into()));
        }
        if let Some(model) = model {
            let names = model.weight_layer_names();
            for layer in &self.thresholded_layers {
                if !names.contains(layer) {
                    return Err(Error::InvalidParameter(format!(
                        "thresholded layer `{layer}` is not a weight layer of the model ({})",
                        names.join(", ")
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One row of the per-epoch trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean minibatch loss over the epoch (at the pre-step weights).
    pub train_loss: f64,
    pub test_loss: Option<f64>,
    pub accuracy: Option<f64>,
    /// Exact-zero fraction over the deployed thresholded weights.
    pub sparsity: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RvsmState {
    pub u: LayerTensors,
    pub iteration: usize,
    /// `(t, L(u^{t+1}, w^t))`: the split objective right after each u-step,
    /// evaluated on that iteration's batch.
    pub lagrangian_trace: Vec<(usize, f64)>,
    /// `(t, ||(u, w)^{t+1} - (u, w)^t||)`.
    pub step_trace: Vec<(usize, f64)>,
    pub loss_trace: Vec<EpochRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumReport {
    /// `max |u - T(w)|` over thresholded layers.
    pub u_residual: f64,
    /// `||grad f(w) + beta (w - u)||_2` over thresholded layers, with the
    /// full-data gradient. Zero at a fixed point of the w-step.
    pub grad_residual: f64,
    /// `max |w - u|`.
    pub w_u_gap: f64,
}

/// Exact minimization of the split objective in `u`: the penalty's
/// thresholding operator at level `lambda / beta`.
pub fn u_step(config: &RvsmConfig, w: &Tensor) -> Result<Tensor> {
    config.penalty.penalty.threshold_tensor(config.gamma()?, w)
}

/// Gradient step on `w` for the split objective with `u` fixed.
pub fn w_step(config: &RvsmConfig, w: &Tensor, u_next: &Tensor, grad_f: &Tensor) -> Result<Tensor> {
    w.ensure_same_shape(u_next, "w-step u")?;
    w.ensure_same_shape(grad_f, "w-step gradient")?;
    let (eta, beta) = (config.eta, config.beta);
    let data: Vec<f64> = w
        .data()
        .iter()
        .zip(u_next.data())
        .zip(grad_f.data())
        .map(|((&w, &u), &g)| w - eta * g - eta * beta * (w - u))
        .collect();
    let mut next = Tensor::from_parts(w.shape().to_vec(), data);
    if config.normalize_w {
        let norm = next.norm_l2();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::DegenerateNormalization(format!(
                "cannot normalize w-step result with norm {norm}"
            )));
        }
        next.scale(1.0 / norm);
    }
    Ok(next)
}

fn split_terms<'a>(
    config: &RvsmConfig,
    pairs: impl Iterator<Item = (&'a Tensor, &'a Tensor)>,
) -> Result<f64> {
    let mut penalty = 0.0;
    let mut coupling = 0.0;
    for (u, w) in pairs {
        u.ensure_same_shape(w, "lagrangian")?;
        penalty += penalty_value(&config.penalty, u.data())?;
        coupling += u
            .data()
            .iter()
            .zip(w.data())
            .map(|(u, w)| (w - u) * (w - u))
            .sum::<f64>();
    }
    Ok(penalty + 0.5 * config.beta * coupling)
}

/// `f + lambda P(u) + beta/2 sum ||w - u||^2` over the layers in `u`.
pub fn lagrangian_value(config: &RvsmConfig, f_value: f64, u: &LayerTensors, w: &LayerTensors) -> Result<f64> {
    let pairs = u
        .iter()
        .map(|(layer, ut)| {
            w.get(layer)
                .map(|wt| (ut, wt))
                .ok_or_else(|| Error::Shape(format!("layer `{layer}` missing from w")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(f_value + split_terms(config, pairs.into_iter())?)
}

/// Shuffled minibatch order driven by the `shuffle` stream of the run seed.
struct BatchPlan {
    order: Vec<usize>,
    batch_size: usize,
    rng: ChaCha8Rng,
}

impl BatchPlan {
    fn new(n: usize, batch_size: usize, seed: u64) -> Self {
        BatchPlan {
            order: (0..n).collect(),
            batch_size,
            rng: crate::seed::rng(crate::seed::derive(seed, "shuffle")),
        }
    }

    /// Next epoch's batches. A single full batch is not shuffled.
    fn epoch(&mut self) -> Vec<Vec<usize>> {
        if self.batch_size < self.order.len() {
            self.order.shuffle(&mut self.rng);
        }
        self.order.chunks(self.batch_size).map(<[usize]>::to_vec).collect()
    }
}

fn gather<'a, S>(data: &'a [S], idx: &[usize]) -> Vec<&'a S> {
    idx.iter().map(|&i| &data[i]).collect()
}

fn check_loss(loss: f64, iteration: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence { iteration, loss })
    }
}

/// Zero fraction over a set of tensors taken together.
fn combined_sparsity<'a>(tensors: impl Iterator<Item = &'a Tensor>) -> f64 {
    let (zeros, total) = tensors.fold((0usize, 0usize), |(z, n), t| {
        (z + t.data().iter().filter(|&&x| x == 0.0).count(), n + t.len())
    });
    if total == 0 {
        0.0
    } else {
        zeros as f64 / total as f64
    }
}

fn evaluate_epoch<M: Model>(
    model: &M,
    test: Option<&[M::Sample]>,
    epoch: usize,
    train_loss: f64,
    sparsity: f64,
) -> Result<EpochRecord> {
    let eval = match test {
        Some(t) if !t.is_empty() => Some(model.evaluate(t)?),
        _ => None,
    };
    Ok(EpochRecord {
        epoch,
        train_loss,
        test_loss: eval.map(|e| e.loss),
        accuracy: eval.and_then(|e| e.accuracy),
        sparsity,
    })
}

/// The deployed model: `u` replaces `w` in the thresholded layers.
pub fn deploy<M: Model>(model: &M, state: &RvsmState) -> Result<M> {
    let mut deployed = model.clone();
    for (layer, u) in &state.u {
        let w = deployed.params_mut().require_mut(&weight_key(layer))?;
        w.ensure_same_shape(u, layer)?;
        *w = u.clone();
    }
    Ok(deployed)
}

/// Result of an RVSM run; the input model is left holding the final `w`.
#[derive(Debug, Clone)]
pub struct RvsmOutcome<M> {
    pub deployed: M,
    pub state: RvsmState,
}

/// Runs RVSM for `config.epochs` epochs. `on_epoch` sees each epoch record as
/// it is produced; `test` (if any) is evaluated on the deployed model.
pub fn rvsm_train<M: Model>(
    model: &mut M,
    train: &[M::Sample],
    test: Option<&[M::Sample]>,
    config: &RvsmConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<RvsmOutcome<M>> {
    config.validate(Some(&*model))?;
    if train.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    let layers = &config.thresholded_layers;
    let keys: Vec<String> = layers.iter().map(|l| weight_key(l)).collect();

    let mut state = RvsmState::default();
    for (layer, key) in layers.iter().zip(&keys) {
        let u0 = u_step(config, model.params().require(key)?)?;
        state.u.insert(layer.clone(), u0);
    }

    let mut plan = BatchPlan::new(train.len(), config.batch_size, config.seed);
    for epoch in 1..=config.epochs {
        let mut loss_sum = 0.0;
        let batches = plan.epoch();
        for idx in &batches {
            let t = state.iteration;
            let mut step_sq = 0.0;

            // u^{t+1} = T(w^t)
            for (layer, key) in layers.iter().zip(&keys) {
                let next = u_step(config, model.params().require(key)?)?;
                let prev = state.u.get_mut(layer).expect("u initialised");
                step_sq += sq_dist(prev, &next);
                *prev = next;
            }

            let batch = gather(train, idx);
            let (loss, grads) = model.loss_grad(&batch)?;
            check_loss(loss, t)?;
            loss_sum += loss;

            let split = split_terms(
                config,
                layers
                    .iter()
                    .zip(&keys)
                    .map(|(l, k)| (&state.u[l], model.params().get(k).expect("validated"))),
            )?;
            state.lagrangian_trace.push((t, loss + split));

            for (name, g) in grads.iter() {
                let w = model.params_mut().require_mut(name)?;
                match keys.iter().position(|k| k == name) {
                    Some(i) => {
                        let next = w_step(config, w, &state.u[&layers[i]], g)?;
                        step_sq += sq_dist(w, &next);
                        *w = next;
                    }
                    None => {
                        step_sq += config.eta * config.eta * g.data().iter().map(|x| x * x).sum::<f64>();
                        w.axpy(-config.eta, g)?;
                    }
                }
            }
            state.step_trace.push((t, step_sq.sqrt()));
            state.iteration += 1;
        }

        let deployed = deploy(model, &state)?;
        let record = evaluate_epoch(
            &deployed,
            test,
            epoch,
            loss_sum / batches.len() as f64,
            combined_sparsity(state.u.values()),
        )?;
        on_epoch(&record);
        state.loss_trace.push(record);
    }

    let deployed = deploy(model, &state)?;
    Ok(RvsmOutcome { deployed, state })
}

fn sq_dist(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Plain minibatch SGD with the same batch order as [`rvsm_train`]; the
/// penalty fields of `config` are ignored.
pub fn sgd_train<M: Model>(
    model: &mut M,
    train: &[M::Sample],
    test: Option<&[M::Sample]>,
    config: &RvsmConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<Vec<EpochRecord>> {
    config.validate(Some(&*model))?;
    if train.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    let keys: Vec<String> = config.thresholded_layers.iter().map(|l| weight_key(l)).collect();
    let mut plan = BatchPlan::new(train.len(), config.batch_size, config.seed);
    let mut iteration = 0;
    let mut records = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let batches = plan.epoch();
        let mut loss_sum = 0.0;
        for idx in &batches {
            let (loss, grads) = model.loss_grad(&gather(train, idx))?;
            check_loss(loss, iteration)?;
            loss_sum += loss;
            model.params_mut().axpy(-config.eta, &grads)?;
            iteration += 1;
        }
        let sparsity = combined_sparsity(keys.iter().filter_map(|k| model.params().get(k)));
        let record = evaluate_epoch(model, test, epoch, loss_sum / batches.len() as f64, sparsity)?;
        on_epoch(&record);
        records.push(record);
    }
    Ok(records)
}

/// Direct SGD on the penalized loss `f(w) + lambda P(w)` for the thresholded
/// layers: `w <- w - eta (grad f + lambda grad P(w))`. Other parameters take
/// plain SGD steps. l0 is rejected.
pub fn penalized_sgd_train<M: Model>(
    model: &mut M,
    train: &[M::Sample],
    test: Option<&[M::Sample]>,
    config: &RvsmConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<Vec<EpochRecord>> {
    let penalty = config.penalty.penalty;
    if penalty == Penalty::L0 {
        return Err(Error::UnsupportedPenalty(
            "direct penalized SGD needs a differentiable penalty (l1 or tl1), not l0".into(),
        ));
    }
    config.validate(Some(&*model))?;
    if train.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    let lambda = config.lambda();
    let keys: Vec<String> = config.thresholded_layers.iter().map(|l| weight_key(l)).collect();
    let mut plan = BatchPlan::new(train.len(), config.batch_size, config.seed);
    let mut iteration = 0;
    let mut records = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let batches = plan.epoch();
        let mut loss_sum = 0.0;
        for idx in &batches {
            let (loss, grads) = model.loss_grad(&gather(train, idx))?;
            check_loss(loss, iteration)?;
            loss_sum += loss;
            for (name, g) in grads.iter() {
                let w = model.params_mut().require_mut(name)?;
                if keys.iter().any(|k| k == name) {
                    for (wi, &gi) in w.data_mut().iter_mut().zip(g.data()) {
                        // lambda == 0 must reproduce plain SGD bit for bit
                        let pen = if lambda == 0.0 { 0.0 } else { lambda * penalty.derivative(*wi)? };
                        *wi -= config.eta * (gi + pen);
                    }
                } else {
                    w.axpy(-config.eta, g)?;
                }
            }
            iteration += 1;
        }
        let sparsity = combined_sparsity(keys.iter().filter_map(|k| model.params().get(k)));
        let record = evaluate_epoch(model, test, epoch, loss_sum / batches.len() as f64, sparsity)?;
        on_epoch(&record);
        records.push(record);
    }
    Ok(records)
}

/// Residuals of the limit-point system `u = T(w)`, `grad f(w) + beta (w - u) = 0`
/// at the model's current `w` and the state's `u`, with the gradient of `f`
/// taken over all of `data`.
pub fn equilibrium_residuals<M: Model>(
    config: &RvsmConfig,
    model: &M,
    state: &RvsmState,
    data: &[M::Sample],
) -> Result<EquilibriumReport> {
    if data.is_empty() {
        return Err(Error::InvalidInput("equilibrium residuals need data".into()));
    }
    let all: Vec<&M::Sample> = data.iter().collect();
    let (_, grads) = model.loss_grad(&all)?;
    let mut u_residual = 0.0_f64;
    let mut w_u_gap = 0.0_f64;
    let mut grad_sq = 0.0;
    for (layer, u) in &state.u {
        let key = weight_key(layer);
        let w = model.params().require(&key)?;
        let g = grads.require(&key)?;
        w.ensure_same_shape(u, layer)?;
        let tw = u_step(config, w)?;
        for i in 0..w.len() {
            let (wi, ui) = (w.data()[i], u.data()[i]);
            u_residual = u_residual.max((ui - tw.data()[i]).abs());
            w_u_gap = w_u_gap.max((wi - ui).abs());
            let r = g.data()[i] + config.beta * (wi - ui);
            grad_sq += r * r;
        }
    }
    Ok(EquilibriumReport {
        u_residual,
        grad_residual: grad_sq.sqrt(),
        w_u_gap,
    })
}

/// Sparsity of the `u` variables, per thresholded layer.
pub fn u_sparsity(state: &RvsmState) -> Result<Vec<(String, f64)>> {
    state
        .u
        .iter()
        .map(|(l, u)| Ok((l.clone(), metrics::sparsity(u)?)))
        .collect()
}

#[cfg(test)]
mod tests;
