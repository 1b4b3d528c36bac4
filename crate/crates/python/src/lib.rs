//! Python bindings: thresholding operators, the CNN, curve datasets,
//! metrics and the two training loops.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use rvsm::curvegen::{self, AugmentParams, CurveSample};
use rvsm::nn::{build_default_network, checkpoint};
use rvsm::prox::{self, Penalty, PenaltySpec};
use rvsm::rvsm::{equilibrium_residuals, penalized_sgd_train, rvsm_train, u_sparsity, EpochRecord};
use rvsm::{metrics, Dataset, Error, Network, NetworkConfig, RvsmConfig, Tensor};

create_exception!(pyrvsm, RvsmError, PyException);
create_exception!(pyrvsm, DivergenceError, RvsmError);

fn py_err(e: Error) -> PyErr {
    let msg = e.to_string();
    match e {
        Error::Io { .. } => PyIOError::new_err(msg),
        Error::Divergence { .. } => DivergenceError::new_err(msg),
        Error::InvalidInput(_)
        | Error::InvalidParameter(_)
        | Error::Shape(_)
        | Error::InvalidLabel { .. }
        | Error::InvalidArchitecture(_)
        | Error::UnsupportedPenalty(_)
        | Error::Config { .. } => PyValueError::new_err(msg),
        _ => RvsmError::new_err(msg),
    }
}

fn penalty(name: &str, a: f64) -> PyResult<Penalty> {
    match name {
        "l0" => Ok(Penalty::L0),
        "l1" => Ok(Penalty::L1),
        "tl1" => Penalty::tl1(a).map_err(py_err),
        other => Err(PyValueError::new_err(format!("unknown penalty `{other}` (l0, l1, tl1)"))),
    }
}

fn tensor(values: Vec<f64>) -> PyResult<Tensor> {
    Tensor::from_slice(&values).map_err(py_err)
}

fn image_tensor(image: Vec<Vec<f64>>) -> PyResult<Tensor> {
    let n = image.len();
    if image.iter().any(|row| row.len() != n) {
        return Err(PyValueError::new_err("image must be a square list of rows"));
    }
    Tensor::new(vec![1, n, n], image.concat()).map_err(py_err)
}

#[pyfunction]
fn hard_threshold(gamma: f64, w: f64) -> PyResult<f64> {
    prox::hard_threshold(gamma, w).map_err(py_err)
}

#[pyfunction]
fn soft_threshold(gamma: f64, w: f64) -> PyResult<f64> {
    prox::soft_threshold(gamma, w).map_err(py_err)
}

#[pyfunction]
fn tl1_threshold(a: f64, gamma: f64, w: f64) -> PyResult<f64> {
    prox::tl1_threshold(a, gamma, w).map_err(py_err)
}

#[pyfunction]
fn tl1_threshold_level(a: f64, gamma: f64) -> PyResult<f64> {
    prox::tl1_threshold_level(a, gamma).map_err(py_err)
}

/// Applies the thresholding operator of `penalty` elementwise.
#[pyfunction]
#[pyo3(signature = (penalty_name, gamma, values, a = 1.0))]
fn threshold(penalty_name: &str, gamma: f64, values: Vec<f64>, a: f64) -> PyResult<Vec<f64>> {
    let p = penalty(penalty_name, a)?;
    Ok(p.threshold_tensor(gamma, &tensor(values)?).map_err(py_err)?.into_data())
}

/// Brute-force grid minimizer of `P(x) + (x - w)^2 / (2 gamma)`.
#[pyfunction]
#[pyo3(signature = (penalty_name, gamma, w, a = 1.0, lo = -2.0, hi = 2.0, step = 1e-6))]
fn prox_oracle(penalty_name: &str, gamma: f64, w: f64, a: f64, lo: f64, hi: f64, step: f64) -> PyResult<f64> {
    prox::prox_oracle(&penalty(penalty_name, a)?, gamma, w, lo, hi, step).map_err(py_err)
}

#[pyfunction]
fn sparsity(values: Vec<f64>) -> PyResult<f64> {
    metrics::sparsity(&tensor(values)?).map_err(py_err)
}

/// Returns `{"zero_fraction", "buckets": {n: fraction}, "gap_indicator"}`.
#[pyfunction]
#[pyo3(signature = (values, scales = vec![2, 3, 4, 5, 10]))]
fn sparsity_buckets<'py>(py: Python<'py>, values: Vec<f64>, scales: Vec<u32>) -> PyResult<Bound<'py, PyDict>> {
    let r = metrics::sparsity_buckets("weights", &tensor(values)?, &scales).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("zero_fraction", r.zero_fraction)?;
    d.set_item("buckets", r.buckets)?;
    d.set_item("gap_indicator", r.gap_indicator)?;
    Ok(d)
}

/// `(changed, total, percent)` sign flips between two weight vectors.
#[pyfunction]
fn sign_changes(initial: Vec<f64>, final_: Vec<f64>) -> PyResult<(usize, usize, f64)> {
    let r = metrics::sign_changes("weights", &tensor(initial)?, &tensor(final_)?).map_err(py_err)?;
    Ok((r.changed, r.total, r.percent))
}

/// A labelled set of images, optionally backed by generated curve samples.
#[pyclass(name = "Dataset", module = "pyrvsm")]
struct PyDataset {
    data: Dataset,
    samples: Option<Vec<CurveSample>>,
}

impl PyDataset {
    fn from_samples(samples: Vec<CurveSample>) -> PyResult<Self> {
        let data = curvegen::to_dataset(&samples).map_err(py_err)?;
        Ok(PyDataset { data, samples: Some(samples) })
    }
}

#[pymethods]
impl PyDataset {
    /// Normal vs. shaky curves; returns `(train, test)`.
    #[staticmethod]
    #[pyo3(signature = (n_train, n_test, size = 100, seed = 0))]
    fn generate(py: Python<'_>, n_train: usize, n_test: usize, size: usize, seed: u64) -> PyResult<(Self, Self)> {
        let (train, test) = py
            .detach(|| curvegen::generate_samples(n_train, n_test, size, &AugmentParams::default(), seed))
            .map_err(py_err)?;
        Ok((Self::from_samples(train)?, Self::from_samples(test)?))
    }

    /// Reads `<root>/train` and `<root>/test`.
    #[staticmethod]
    fn read(root: PathBuf) -> PyResult<(Self, Self)> {
        let (train, test) = curvegen::io::read_dataset(&root).map_err(py_err)?;
        Ok((Self::from_samples(train)?, Self::from_samples(test)?))
    }

    /// Writes this set as one split directory (manifest plus PGM files).
    fn write_split(&self, dir: PathBuf) -> PyResult<()> {
        let samples = self
            .samples
            .as_ref()
            .ok_or_else(|| PyValueError::new_err("dataset has no curve samples to write"))?;
        curvegen::io::write_split(&dir, samples).map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.data.len()
    }

    fn label(&self, index: usize) -> PyResult<usize> {
        self.example(index).map(|e| e.label)
    }

    /// Image `index` as a list of rows with values 0.0 / 1.0.
    fn image(&self, index: usize) -> PyResult<Vec<Vec<f64>>> {
        let e = self.example(index)?;
        let n = *e.image.shape().last().unwrap_or(&0);
        Ok(e.image.data().chunks(n.max(1)).map(<[f64]>::to_vec).collect())
    }

    fn labels(&self) -> Vec<usize> {
        self.data.examples().iter().map(|e| e.label).collect()
    }

    fn class_counts(&self) -> Vec<usize> {
        self.data.class_counts()
    }
}

impl PyDataset {
    fn example(&self, index: usize) -> PyResult<&rvsm::Example> {
        self.data
            .examples()
            .get(index)
            .ok_or_else(|| pyo3::exceptions::PyIndexError::new_err(format!("index {index} out of range")))
    }
}

/// The three-conv, dense-128 classifier.
#[pyclass(name = "Network", module = "pyrvsm", skip_from_py_object)]
#[derive(Clone)]
struct PyNetwork {
    net: Network,
}

#[pymethods]
impl PyNetwork {
    #[new]
    #[pyo3(signature = (seed = 0, input_size = 100, num_classes = 2, filters = 32, hidden = 128))]
    fn new(seed: u64, input_size: usize, num_classes: usize, filters: usize, hidden: usize) -> PyResult<Self> {
        let net = if filters == 32 && hidden == 128 {
            build_default_network(num_classes, input_size, seed)
        } else {
            let config = NetworkConfig {
                input_size,
                in_channels: 1,
                filters,
                hidden,
                num_classes,
            };
            Network::new(config, seed)
        }
        .map_err(py_err)?;
        Ok(PyNetwork { net })
    }

    /// Loads a checkpoint written by `save` or by `rvsm train`.
    #[staticmethod]
    #[pyo3(signature = (path, input_size = 100))]
    fn load(path: PathBuf, input_size: usize) -> PyResult<Self> {
        let params = checkpoint::load(&path).map_err(py_err)?;
        Ok(PyNetwork {
            net: Network::from_params(input_size, params).map_err(py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        checkpoint::save(&path, self.net.params()).map_err(py_err)
    }

    fn layer_names(&self) -> Vec<String> {
        self.net.weight_layer_names()
    }

    fn weight_counts(&self) -> Vec<(String, usize)> {
        self.net.weight_counts()
    }

    /// `(shape, flat values)` of a layer's weight tensor.
    fn weights(&self, layer: &str) -> PyResult<(Vec<usize>, Vec<f64>)> {
        let t = self.net.params().require(&format!("{layer}.weight")).map_err(py_err)?;
        Ok((t.shape().to_vec(), t.data().to_vec()))
    }

    fn forward(&self, image: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        Ok(self.net.forward(&image_tensor(image)?).map_err(py_err)?.into_data())
    }

    fn predict(&self, image: Vec<Vec<f64>>) -> PyResult<usize> {
        self.net.predict(&image_tensor(image)?).map_err(py_err)
    }

    /// `(mean loss, accuracy)` over a dataset.
    fn evaluate(&self, py: Python<'_>, data: &PyDataset) -> PyResult<(f64, f64)> {
        let net = &self.net;
        let examples = data.data.examples();
        py.detach(|| net.evaluate(examples)).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        let c = self.net.config();
        format!(
            "Network(input_size={}, filters={}, hidden={}, num_classes={})",
            c.input_size, c.filters, c.hidden, c.num_classes
        )
    }
}

fn epoch_dict<'py>(py: Python<'py>, r: &EpochRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("epoch", r.epoch)?;
    d.set_item("train_loss", r.train_loss)?;
    d.set_item("test_loss", r.test_loss)?;
    d.set_item("accuracy", r.accuracy)?;
    d.set_item("sparsity", r.sparsity)?;
    Ok(d)
}

/// Trains a copy of `network`.
///
/// `algorithm` is `"rvsm"` or `"sgd-penalty"`. Returns a dict with the
/// deployed `network`, per-epoch `epochs` and, for RVSM, `u_sparsity`,
/// `lagrangian` (list of `(iteration, value)`) and `equilibrium`.
#[pyfunction]
#[pyo3(signature = (
    network, train, test = None, algorithm = "rvsm", penalty_name = "l0", lam = 0.0005, beta = 0.1,
    a = 1.0, eta = 0.01, epochs = 20, batch_size = 32, layers = vec!["dense".to_string()],
    normalize_w = false, seed = 0
))]
#[allow(clippy::too_many_arguments)]
fn train<'py>(
    py: Python<'py>,
    network: &PyNetwork,
    train: &PyDataset,
    test: Option<&PyDataset>,
    algorithm: &str,
    penalty_name: &str,
    lam: f64,
    beta: f64,
    a: f64,
    eta: f64,
    epochs: usize,
    batch_size: usize,
    layers: Vec<String>,
    normalize_w: bool,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let config = RvsmConfig {
        eta,
        beta,
        penalty: PenaltySpec::new(penalty(penalty_name, a)?, lam).map_err(py_err)?,
        thresholded_layers: layers,
        normalize_w,
        epochs,
        batch_size,
        seed,
    };
    let mut net = network.net.clone();
    let train_ex = train.data.examples();
    let test_ex = test.map(|t| t.data.examples());
    let out = PyDict::new(py);
    match algorithm {
        "rvsm" => {
            let (outcome, eq) = py
                .detach(|| {
                    let outcome = rvsm_train(&mut net, train_ex, test_ex, &config, |_| {})?;
                    let eq = equilibrium_residuals(&config, &net, &outcome.state, train_ex)?;
                    Ok::<_, Error>((outcome, eq))
                })
                .map_err(py_err)?;
            let records = outcome
                .state
                .loss_trace
                .iter()
                .map(|r| epoch_dict(py, r))
                .collect::<PyResult<Vec<_>>>()?;
            out.set_item("epochs", records)?;
            out.set_item("u_sparsity", u_sparsity(&outcome.state).map_err(py_err)?)?;
            out.set_item("lagrangian", outcome.state.lagrangian_trace.clone())?;
            let e = PyDict::new(py);
            e.set_item("u_residual", eq.u_residual)?;
            e.set_item("grad_residual", eq.grad_residual)?;
            out.set_item("equilibrium", e)?;
            out.set_item("network", PyNetwork { net: outcome.deployed })?;
        }
        "sgd-penalty" => {
            let records = py
                .detach(|| penalized_sgd_train(&mut net, train_ex, test_ex, &config, |_| {}))
                .map_err(py_err)?;
            let records = records.iter().map(|r| epoch_dict(py, r)).collect::<PyResult<Vec<_>>>()?;
            out.set_item("epochs", records)?;
            out.set_item("network", PyNetwork { net })?;
        }
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown algorithm `{other}` (rvsm, sgd-penalty)"
            )))
        }
    }
    Ok(out)
}

#[pymodule]
fn pyrvsm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("RvsmError", m.py().get_type::<RvsmError>())?;
    m.add("DivergenceError", m.py().get_type::<DivergenceError>())?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyNetwork>()?;
    m.add_function(wrap_pyfunction!(hard_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(soft_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(tl1_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(tl1_threshold_level, m)?)?;
    m.add_function(wrap_pyfunction!(threshold, m)?)?;
    m.add_function(wrap_pyfunction!(prox_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(sparsity, m)?)?;
    m.add_function(wrap_pyfunction!(sparsity_buckets, m)?)?;
    m.add_function(wrap_pyfunction!(sign_changes, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    Ok(())
}
