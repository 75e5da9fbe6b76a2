//! Python bindings for `p2b_core`.

use num_bigint::BigUint;
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict};

use p2b_core::bandit::LinUcb as CoreLinUcb;
use p2b_core::codec::{self, EncoderModel, TrainOptions};
use p2b_core::config::ExperimentConfig;
use p2b_core::pipeline::{self, AnonymousTuple};
use p2b_core::{bench, privacy, Error};

/// `(code, action, reward)`.
type Tuple = (usize, usize, u8);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyOSError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Number of distinct precision-`q` contexts in `d` dimensions.
#[pyfunction]
fn cardinality(d: usize, q: u32) -> PyResult<BigUint> {
    codec::cardinality(d, q).map_err(to_py)
}

/// Normalizes `raw` to sum 1 and rounds onto the grid; returns integer units
/// out of `10**q`.
#[pyfunction]
fn normalize_and_round(raw: Vec<f64>, q: u32) -> PyResult<Vec<u32>> {
    Ok(codec::normalize_and_round(&raw, q).map_err(to_py)?.units().to_vec())
}

#[pyfunction]
fn softmax(v: Vec<f64>) -> Vec<f64> {
    bench::softmax(&v)
}

#[pyfunction]
#[pyo3(signature = (p, epsilon_bar = 0.0))]
fn epsilon_of(p: f64, epsilon_bar: f64) -> PyResult<f64> {
    privacy::epsilon_of(p, epsilon_bar).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (l, p, omega_c = privacy::DEFAULT_OMEGA_C))]
fn delta_of(l: u64, p: f64, omega_c: f64) -> PyResult<f64> {
    privacy::delta_of(l, p, omega_c).map_err(to_py)
}

#[pyfunction]
fn crowd_blending_l(users: u64, k: u64) -> PyResult<u64> {
    privacy::crowd_blending_l(users, k).map_err(to_py)
}

#[pyfunction]
fn compose(m: u64, epsilon: f64) -> PyResult<f64> {
    privacy::compose(m, epsilon).map_err(to_py)
}

#[pyfunction]
fn delta_check(delta: f64, users: u64) -> bool {
    privacy::delta_check(delta, users)
}

/// Keeps the `(code, action, reward)` tuples whose code occurs at least
/// `threshold` times; returns `(kept, dropped_count)`.
#[pyfunction]
fn apply_threshold(tuples: Vec<Tuple>, threshold: u64) -> PyResult<(Vec<Tuple>, usize)> {
    let tuples = tuples
        .into_iter()
        .map(|(code, action, reward)| AnonymousTuple { code, action, reward })
        .collect();
    let batch = pipeline::apply_threshold(tuples, threshold).map_err(to_py)?;
    Ok((
        batch.tuples.iter().map(|t| (t.code, t.action, t.reward)).collect(),
        batch.dropped_count,
    ))
}

/// Runs an experiment from keyword settings (same keys as the config file)
/// and returns the CSV text.
#[pyfunction]
#[pyo3(signature = (**settings))]
fn run_experiment(py: Python<'_>, settings: Option<&Bound<'_, PyDict>>) -> PyResult<String> {
    let mut config = ExperimentConfig::default();
    if let Some(settings) = settings {
        for (key, value) in settings.iter() {
            let key: String = key.extract()?;
            let text = if value.is_instance_of::<PyBool>() {
                value.extract::<bool>()?.to_string()
            } else {
                value.str()?.to_string()
            };
            config.set(&key, &text).map_err(PyValueError::new_err)?;
        }
    }
    let result = py.detach(|| bench::run_experiment(&config)).map_err(to_py)?;
    Ok(result.to_csv())
}

#[pyclass(name = "Encoder", module = "p2b")]
struct Encoder {
    model: EncoderModel,
}

#[pymethods]
impl Encoder {
    #[staticmethod]
    #[pyo3(signature = (d, q, k, seed = 0, samples = 100_000))]
    fn train(py: Python<'_>, d: usize, q: u32, k: usize, seed: u64, samples: usize) -> PyResult<Self> {
        let options = TrainOptions {
            samples,
            ..TrainOptions::default()
        };
        let model = py
            .detach(|| codec::train_encoder_with(d, q, k, seed, &options))
            .map_err(to_py)?;
        Ok(Self { model })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            model: EncoderModel::from_json(text).map_err(to_py)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.model.to_json().map_err(to_py)
    }

    /// Nearest-centroid code of a context (values on the grid, summing to 1).
    fn encode(&self, x: Vec<f64>) -> PyResult<usize> {
        Ok(self.model.encode_slice(&x).map_err(to_py)?.code())
    }

    #[getter]
    fn d(&self) -> usize {
        self.model.d()
    }

    #[getter]
    fn q(&self) -> u32 {
        self.model.q()
    }

    #[getter]
    fn k(&self) -> usize {
        self.model.k()
    }

    #[getter]
    fn min_cluster_size(&self) -> u64 {
        self.model.min_cluster_size()
    }

    #[getter]
    fn centroids(&self) -> Vec<Vec<f64>> {
        self.model.centroids().to_vec()
    }

    fn __repr__(&self) -> String {
        format!("Encoder(d={}, q={}, k={})", self.model.d(), self.model.q(), self.model.k())
    }
}

#[pyclass(name = "LinUcb", module = "p2b")]
struct LinUcb {
    inner: CoreLinUcb,
}

#[pymethods]
impl LinUcb {
    #[new]
    #[pyo3(signature = (dim, actions, alpha = 1.0))]
    fn new(dim: usize, actions: usize, alpha: f64) -> PyResult<Self> {
        Ok(Self {
            inner: CoreLinUcb::new(dim, actions, alpha).map_err(to_py)?,
        })
    }

    fn scores(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.scores(&x).map_err(to_py)
    }

    fn select_action(&self, x: Vec<f64>) -> PyResult<usize> {
        Ok(self.inner.select_action(&x).map_err(to_py)?.0)
    }

    fn observe(&mut self, x: Vec<f64>, action: usize, reward: u8) -> PyResult<()> {
        self.inner.observe(&x, action, reward).map_err(to_py)
    }

    fn theta(&self, action: usize) -> PyResult<Vec<f64>> {
        if action >= self.inner.actions() {
            return Err(PyValueError::new_err(format!("action {action} out of range")));
        }
        Ok(self.inner.theta(action))
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn actions(&self) -> usize {
        self.inner.actions()
    }
}

#[pymodule]
fn p2b(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(cardinality, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_and_round, m)?)?;
    m.add_function(wrap_pyfunction!(softmax, m)?)?;
    m.add_function(wrap_pyfunction!(epsilon_of, m)?)?;
    m.add_function(wrap_pyfunction!(delta_of, m)?)?;
    m.add_function(wrap_pyfunction!(crowd_blending_l, m)?)?;
    m.add_function(wrap_pyfunction!(compose, m)?)?;
    m.add_function(wrap_pyfunction!(delta_check, m)?)?;
    m.add_function(wrap_pyfunction!(apply_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_class::<Encoder>()?;
    m.add_class::<LinUcb>()?;
    Ok(())
}
