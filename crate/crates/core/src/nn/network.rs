use rand::Rng;
use rayon::prelude::*;

use super::activation::softmax_ce_raw;
use super::params::{Gradients, ParamSet};
use super::pool::pooled_size;
use super::{conv, dense, pool};
use crate::dataset::Example;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Samples per gradient chunk. Chunks are reduced in index order, so batch
/// gradients are bitwise independent of the number of worker threads.
const CHUNK: usize = 8;
/// Chunks evaluated per parallel wave; bounds peak memory for large batches.
const WAVE: usize = 8;

/// Architecture hyperparameters. The default is the 100x100, 32-filter,
/// dense-128, two-class network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetworkConfig {
    pub input_size: usize,
    pub in_channels: usize,
    pub filters: usize,
    pub hidden: usize,
    pub num_classes: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            input_size: 100,
            in_channels: 1,
            filters: 32,
            hidden: 128,
            num_classes: 2,
        }
    }
}

impl NetworkConfig {
    /// Spatial extent after the input and after each of the three pools.
    pub fn spatial_chain(&self) -> [usize; 4] {
        let s1 = pooled_size(self.input_size);
        let s2 = pooled_size(s1);
        [self.input_size, s1, s2, pooled_size(s2)]
    }

    pub fn flat_features(&self) -> usize {
        let s = self.spatial_chain()[3];
        s * s * self.filters
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size < 8 {
            return Err(Error::InvalidArchitecture(format!(
                "input size {} is too small for three pooling stages (need >= 8)",
                self.input_size
            )));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidArchitecture(format!(
                "need at least 2 classes, got {}",
                self.num_classes
            )));
        }
        if self.in_channels == 0 || self.filters == 0 || self.hidden == 0 {
            return Err(Error::InvalidArchitecture(
                "channel, filter and hidden counts must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    Conv2d { in_channels: usize, out_channels: usize },
    Relu,
    MaxPool,
    Flatten,
    Dense { in_features: usize, out_features: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub name: String,
    pub spec: LayerSpec,
}

impl Layer {
    fn new(name: &str, spec: LayerSpec) -> Self {
        Layer {
            name: name.to_string(),
            spec,
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(self.spec, LayerSpec::Conv2d { .. } | LayerSpec::Dense { .. })
    }

    pub fn weight_key(&self) -> String {
        format!("{}.weight", self.name)
    }

    pub fn bias_key(&self) -> String {
        format!("{}.bias", self.name)
    }
}

/// Saved forward state needed by the backward pass.
enum Trace {
    Conv { cols: Vec<f64>, dims: (usize, usize, usize) },
    Relu { output: Vec<f64> },
    Pool { argmax: Vec<usize>, input_len: usize },
    Flatten,
    Dense { input: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    config: NetworkConfig,
    layers: Vec<Layer>,
    params: ParamSet,
    rng_seed: u64,
}

fn layer_list(cfg: &NetworkConfig) -> Vec<Layer> {
    let f = cfg.filters;
    vec![
        Layer::new("conv1", LayerSpec::Conv2d { in_channels: cfg.in_channels, out_channels: f }),
        Layer::new("relu1", LayerSpec::Relu),
        Layer::new("pool1", LayerSpec::MaxPool),
        Layer::new("conv2", LayerSpec::Conv2d { in_channels: f, out_channels: f }),
        Layer::new("relu2", LayerSpec::Relu),
        Layer::new("pool2", LayerSpec::MaxPool),
        Layer::new("conv3", LayerSpec::Conv2d { in_channels: f, out_channels: f }),
        Layer::new("relu3", LayerSpec::Relu),
        Layer::new("pool3", LayerSpec::MaxPool),
        Layer::new("flatten", LayerSpec::Flatten),
        Layer::new("dense", LayerSpec::Dense { in_features: cfg.flat_features(), out_features: cfg.hidden }),
        Layer::new("relu4", LayerSpec::Relu),
        Layer::new("output", LayerSpec::Dense { in_features: cfg.hidden, out_features: cfg.num_classes }),
    ]
}

fn weight_shape(spec: &LayerSpec) -> Option<Vec<usize>> {
    match *spec {
        LayerSpec::Conv2d { in_channels, out_channels } => Some(vec![out_channels, in_channels, 3, 3]),
        LayerSpec::Dense { in_features, out_features } => Some(vec![in_features, out_features]),
        _ => None,
    }
}

fn fans(spec: &LayerSpec) -> (usize, usize) {
    match *spec {
        LayerSpec::Conv2d { in_channels, out_channels } => (in_channels * 9, out_channels * 9),
        LayerSpec::Dense { in_features, out_features } => (in_features, out_features),
        _ => (0, 0),
    }
}

fn out_features(spec: &LayerSpec) -> usize {
    match *spec {
        LayerSpec::Conv2d { out_channels, .. } => out_channels,
        LayerSpec::Dense { out_features, .. } => out_features,
        _ => 0,
    }
}

/// The default two-class architecture for `input_size x input_size` images.
pub fn build_default_network(num_classes: usize, input_size: usize, seed: u64) -> Result<Network> {
    Network::new(
        NetworkConfig {
            input_size,
            num_classes,
            ..NetworkConfig::default()
        },
        seed,
    )
}

impl Network {
    /// Builds the network with weights drawn uniformly from
    /// `[-sqrt(6 / (fan_in + fan_out)), +sqrt(6 / (fan_in + fan_out))]` and zero biases.
    pub fn new(config: NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layers = layer_list(&config);
        let mut rng = crate::seed::rng(seed);
        let mut params = ParamSet::new();
        for layer in layers.iter().filter(|l| l.has_params()) {
            let shape = weight_shape(&layer.spec).expect("parametrized layer");
            let (fan_in, fan_out) = fans(&layer.spec);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let n: usize = shape.iter().product();
            let data = (0..n).map(|_| rng.random_range(-limit..limit)).collect();
            params.insert(layer.weight_key(), Tensor::from_parts(shape, data));
            params.insert(layer.bias_key(), Tensor::zeros(&[out_features(&layer.spec)]));
        }
        Ok(Network {
            config,
            layers,
            params,
            rng_seed: seed,
        })
    }

    /// Rebuilds a network around existing parameters (e.g. from a checkpoint),
    /// inferring filters/hidden/classes from the tensor shapes.
    pub fn from_params(input_size: usize, params: ParamSet) -> Result<Self> {
        let dim = |key: &str, axis: usize| -> Result<usize> {
            params
                .require(key)?
                .shape()
                .get(axis)
                .copied()
                .ok_or_else(|| Error::Shape(format!("parameter `{key}` has too few dimensions")))
        };
        let config = NetworkConfig {
            input_size,
            in_channels: dim("conv1.weight", 1)?,
            filters: dim("conv1.weight", 0)?,
            hidden: dim("dense.weight", 1)?,
            num_classes: dim("output.weight", 1)?,
        };
        let template = Network::new(config, 0)?;
        template.params.ensure_congruent(&params)?;
        if let Some((name, _)) = params.iter().find(|(_, t)| !t.all_finite()) {
            return Err(Error::InvalidInput(format!("parameter `{name}` has non-finite entries")));
        }
        Ok(Network {
            params,
            ..template
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    /// Names of layers that own a weight tensor, in order.
    pub fn weight_layer_names(&self) -> Vec<String> {
        self.layers.iter().filter(|l| l.has_params()).map(|l| l.name.clone()).collect()
    }

    /// `(layer, weight count)` for every parametrized layer; biases excluded.
    pub fn weight_counts(&self) -> Vec<(String, usize)> {
        self.layers
            .iter()
            .filter(|l| l.has_params())
            .map(|l| (l.name.clone(), self.params.get(&l.weight_key()).map_or(0, Tensor::len)))
            .collect()
    }

    fn check_image(&self, image: &Tensor) -> Result<()> {
        let s = self.config.input_size;
        if image.shape() != [self.config.in_channels, s, s] {
            return Err(Error::Shape(format!(
                "image shape {:?} does not match network input [{}, {s}, {s}]",
                image.shape(),
                self.config.in_channels
            )));
        }
        Ok(())
    }

    fn run(&self, image: &Tensor, traces: Option<&mut Vec<Trace>>) -> Result<Vec<f64>> {
        self.check_image(image)?;
        let mut dims = (self.config.in_channels, self.config.input_size, self.config.input_size);
        let mut act = image.data().to_vec();
        let mut traces = traces;
        for layer in &self.layers {
            let trace = match layer.spec {
                LayerSpec::Conv2d { out_channels, .. } => {
                    let w = self.params.require(&layer.weight_key())?;
                    let b = self.params.require(&layer.bias_key())?;
                    let (out, cols) = conv::forward_raw(&act, dims, w.data(), b.data(), out_channels);
                    let t = Trace::Conv { cols, dims };
                    act = out;
                    dims.0 = out_channels;
                    t
                }
                LayerSpec::Relu => {
                    act.iter_mut().for_each(|v| *v = v.max(0.0));
                    Trace::Relu {
                        output: if traces.is_some() { act.clone() } else { Vec::new() },
                    }
                }
                LayerSpec::MaxPool => {
                    let input_len = act.len();
                    let (out, argmax) = pool::forward_raw(&act, dims);
                    act = out;
                    dims = (dims.0, pooled_size(dims.1), pooled_size(dims.2));
                    Trace::Pool { argmax, input_len }
                }
                LayerSpec::Flatten => {
                    dims = (act.len(), 1, 1);
                    Trace::Flatten
                }
                LayerSpec::Dense { out_features, .. } => {
                    let w = self.params.require(&layer.weight_key())?;
                    let b = self.params.require(&layer.bias_key())?;
                    let out = dense::forward_raw(&act, w.data(), b.data());
                    let input = std::mem::replace(&mut act, out);
                    dims = (out_features, 1, 1);
                    Trace::Dense { input }
                }
            };
            if let Some(t) = traces.as_deref_mut() {
                t.push(trace);
            }
        }
        Ok(act)
    }

    /// Logits for one image.
    pub fn forward(&self, image: &Tensor) -> Result<Tensor> {
        let logits = self.run(image, None)?;
        Ok(Tensor::from_parts(vec![logits.len()], logits))
    }

    /// Class with the largest logit; ties go to the lower index.
    pub fn predict(&self, image: &Tensor) -> Result<usize> {
        let logits = self.run(image, None)?;
        Ok((0..logits.len()).fold(0, |best, i| if logits[i] > logits[best] { i } else { best }))
    }

    /// Cross-entropy loss of one sample; gradients are accumulated into `grads`.
    pub(crate) fn accumulate_sample(&self, image: &Tensor, label: usize, grads: &mut Gradients) -> Result<f64> {
        let mut traces = Vec::with_capacity(self.layers.len());
        let logits = self.run(image, Some(&mut traces))?;
        let (loss, mut grad) = softmax_ce_raw(&logits, label)?;

        for (i, (layer, trace)) in self.layers.iter().zip(traces).enumerate().rev() {
            let need_input = i > 0;
            grad = match trace {
                Trace::Conv { cols, dims } => {
                    let out_channels = out_features(&layer.spec);
                    let w = self.params.require(&layer.weight_key())?;
                    let mut gb = vec![0.0; out_channels];
                    let gw = grads.require_mut(&layer.weight_key())?;
                    let gi = conv::backward_raw(&cols, dims, w.data(), out_channels, &grad, gw.data_mut(), &mut gb, need_input);
                    add_into(grads.require_mut(&layer.bias_key())?, &gb);
                    match gi {
                        Some(g) => g,
                        None => break,
                    }
                }
                Trace::Relu { output } => {
                    grad.iter_mut().zip(&output).for_each(|(g, &y)| {
                        if y <= 0.0 {
                            *g = 0.0
                        }
                    });
                    grad
                }
                Trace::Pool { argmax, input_len } => pool::backward_raw(&argmax, input_len, &grad),
                Trace::Flatten => grad,
                Trace::Dense { input } => {
                    let w = self.params.require(&layer.weight_key())?;
                    let mut gb = vec![0.0; grad.len()];
                    let gw = grads.require_mut(&layer.weight_key())?;
                    let gi = dense::backward_raw(&input, w.data(), &grad, gw.data_mut(), &mut gb, need_input);
                    add_into(grads.require_mut(&layer.bias_key())?, &gb);
                    match gi {
                        Some(g) => g,
                        None => break,
                    }
                }
            };
        }
        Ok(loss)
    }

    /// Loss and parameter gradients of a single labelled image.
    pub fn backward(&self, image: &Tensor, label: usize) -> Result<(f64, Gradients)> {
        let mut grads = self.params.zeros_like();
        let loss = self.accumulate_sample(image, label, &mut grads)?;
        Ok((loss, grads))
    }

    /// Mean loss and mean gradient over `batch`.
    ///
    /// Samples are processed in fixed chunks that may run in parallel; chunk
    /// results are summed in index order, so the result is deterministic.
    pub fn batch_loss_grad(&self, batch: &[&Example]) -> Result<(f64, Gradients)> {
        if batch.is_empty() {
            return Err(Error::InvalidInput("empty batch".into()));
        }
        let mut total_loss = 0.0;
        let mut total = self.params.zeros_like();
        let chunks: Vec<&[&Example]> = batch.chunks(CHUNK).collect();
        for wave in chunks.chunks(WAVE) {
            let partials = wave
                .par_iter()
                .map(|chunk| {
                    let mut g = self.params.zeros_like();
                    let mut loss = 0.0;
                    for ex in chunk.iter() {
                        loss += self.accumulate_sample(&ex.image, ex.label, &mut g)?;
                    }
                    Ok((loss, g))
                })
                .collect::<Result<Vec<_>>>()?;
            for (loss, g) in partials {
                total_loss += loss;
                total.axpy(1.0, &g)?;
            }
        }
        let scale = 1.0 / batch.len() as f64;
        total.scale(scale);
        Ok((total_loss * scale, total))
    }

    /// Mean loss and accuracy over `examples` (no gradients).
    pub fn evaluate(&self, examples: &[Example]) -> Result<(f64, f64)> {
        if examples.is_empty() {
            return Err(Error::InvalidInput("empty evaluation set".into()));
        }
        let per_sample = examples
            .par_iter()
            .map(|ex| {
                let logits = self.run(&ex.image, None)?;
                let (loss, _) = softmax_ce_raw(&logits, ex.label)?;
                let pred = (0..logits.len()).fold(0, |b, i| if logits[i] > logits[b] { i } else { b });
                Ok((loss, pred == ex.label))
            })
            .collect::<Result<Vec<_>>>()?;
        let n = examples.len() as f64;
        let loss = per_sample.iter().map(|(l, _)| l).sum::<f64>() / n;
        let correct = per_sample.iter().filter(|(_, ok)| *ok).count() as f64;
        Ok((loss, correct / n))
    }

    /// `params <- params - eta * grads`.
    pub fn sgd_update(&mut self, grads: &Gradients, eta: f64) -> Result<()> {
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(Error::InvalidParameter(format!("learning rate must be >= 0, got {eta}")));
        }
        self.params.axpy(-eta, grads)
    }
}

fn add_into(t: &mut Tensor, values: &[f64]) {
    t.data_mut().iter_mut().zip(values).for_each(|(a, b)| *a += b);
}
