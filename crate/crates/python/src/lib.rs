//! Python bindings for the `adafl` simulator.

use std::path::PathBuf;

use adafl::attacks::{self, ClassMeans};
use adafl::data::{self, SynthSpec};
use adafl::federation::{aggregate_fedavg, UpdateRecord};
use adafl::harness::{self, presets, ExperimentConfig};
use adafl::metrics::Predictions;
use adafl::nn::{ModelState, ParameterVector, Tensor};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: adafl::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn rows_to_tensor(rows: &[Vec<f64>], shape: &[usize]) -> PyResult<Tensor> {
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Tensor::new([vec![rows.len()], shape.to_vec()].concat(), flat).map_err(err)
}

/// A feed-forward classifier with a softmax output.
#[pyclass(name = "Model", module = "adafl_py", skip_from_py_object)]
#[derive(Clone)]
pub struct PyModel {
    inner: ModelState,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    #[pyo3(signature = (input_dim, hidden, classes, seed=0))]
    fn mlp(input_dim: usize, hidden: Vec<usize>, classes: usize, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: ModelState::mlp(input_dim, &hidden, classes, seed).map_err(err)?,
        })
    }

    /// The small reference CNN for `channels x side x side` images.
    #[staticmethod]
    #[pyo3(signature = (channels, side, classes, seed=0))]
    fn cnn(channels: usize, side: usize, classes: usize, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: ModelState::reference_cnn(channels, side, side, classes, seed).map_err(err)?,
        })
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.inner.param_count()
    }

    fn parameters(&self) -> Vec<f64> {
        self.inner.to_vector().into_inner()
    }

    fn set_parameters(&mut self, values: Vec<f64>) -> PyResult<()> {
        self.inner.load_vector(&ParameterVector::new(values)).map_err(err)
    }

    fn predict(&self, rows: Vec<Vec<f64>>) -> PyResult<Vec<usize>> {
        let x = rows_to_tensor(&rows, self.inner.input_shape())?;
        self.inner.predict(&x).map_err(err)
    }

    fn loss(&self, rows: Vec<Vec<f64>>, labels: Vec<usize>) -> PyResult<f64> {
        let x = rows_to_tensor(&rows, self.inner.input_shape())?;
        self.inner.loss(&x, &labels).map_err(err)
    }

    /// Inputs to the last dense layer, one row per sample.
    fn features(&self, rows: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let x = rows_to_tensor(&rows, self.inner.input_shape())?;
        let f = self.inner.extract_features(&x).map_err(err)?;
        Ok((0..f.rows()).map(|i| f.row(i).to_vec()).collect())
    }

    fn __repr__(&self) -> String {
        format!("Model(classes={}, params={})", self.inner.num_classes(), self.inner.param_count())
    }
}

/// A labelled dataset held in memory.
#[pyclass(name = "Dataset", module = "adafl_py", skip_from_py_object)]
#[derive(Clone)]
pub struct PyDataset {
    inner: data::Dataset,
}

#[pymethods]
impl PyDataset {
    /// Isotropic Gaussian blobs with class means on scaled coordinate axes.
    #[staticmethod]
    #[pyo3(signature = (classes, dim, spacing, sigma, per_class, seed=0))]
    fn synth(classes: usize, dim: usize, spacing: f64, sigma: f64, per_class: usize, seed: u64) -> PyResult<Self> {
        let spec = SynthSpec::axis_layout(classes, dim, spacing, sigma, per_class, seed).map_err(err)?;
        Ok(Self {
            inner: data::synth_blobs(&spec).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_idx(images: PathBuf, labels: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: data::load_idx(images, labels).map_err(err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    #[getter]
    fn labels(&self) -> Vec<usize> {
        self.inner.labels().to_vec()
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.inner.len())
            .map(|i| self.inner.input(i).iter().map(|&v| v as f64).collect())
            .collect()
    }
}

/// Rescales `adversarial - global` to norm `q`; returns `(params, gamma)`.
#[pyfunction]
fn train_and_scale(adversarial: Vec<f64>, global: Vec<f64>, q: f64) -> PyResult<(Vec<f64>, f64)> {
    let (out, gamma) =
        attacks::train_and_scale(&ParameterVector::new(adversarial), &ParameterVector::new(global), q).map_err(err)?;
    Ok((out.into_inner(), gamma))
}

/// Sample-weighted mean of client deltas added to the global parameters.
#[pyfunction]
fn fedavg(global: Vec<f64>, deltas: Vec<Vec<f64>>, samples: Vec<usize>) -> PyResult<Vec<f64>> {
    if deltas.len() != samples.len() {
        return Err(PyValueError::new_err("deltas and samples differ in length"));
    }
    let g = ParameterVector::new(global);
    let zero = ParameterVector::zeros(g.len());
    let ups = deltas
        .into_iter()
        .zip(samples)
        .enumerate()
        .map(|(k, (d, n))| UpdateRecord::new(k, &ParameterVector::new(d), &zero, n, false))
        .collect::<adafl::Result<Vec<_>>>()
        .map_err(err)?;
    Ok(aggregate_fedavg(&g, &ups).map_err(err)?.into_inner())
}

/// Norm filter over client deltas; returns `(accepted, rejected)` indices.
#[pyfunction]
fn ndc_filter(deltas: Vec<Vec<f64>>, q: f64) -> PyResult<(Vec<usize>, Vec<usize>)> {
    let ups = deltas
        .into_iter()
        .enumerate()
        .map(|(k, d)| {
            let zero = ParameterVector::zeros(d.len());
            UpdateRecord::new(k, &ParameterVector::new(d), &zero, 1, false)
        })
        .collect::<adafl::Result<Vec<_>>>()
        .map_err(err)?;
    let out = adafl::defense::ndc_filter(ups, q).map_err(err)?;
    Ok((
        out.accepted.iter().map(|u| u.client).collect(),
        out.rejected.iter().map(|r| r.client).collect(),
    ))
}

/// Pairwise distances between per-class mean feature vectors; `None` where a
/// class has no samples.
#[pyfunction]
fn attacking_distance(features: Vec<Vec<f64>>, labels: Vec<usize>, classes: usize) -> PyResult<Vec<Vec<Option<f64>>>> {
    let dim = features.first().map_or(0, Vec::len);
    let f = rows_to_tensor(&features, &[dim])?;
    let m: ClassMeans = attacks::class_means(&f, &labels, classes).map_err(err)?;
    let adm = attacks::attacking_distance(&m).map_err(err)?;
    Ok((0..classes).map(|a| adm.row(a).to_vec()).collect())
}

/// Non-source class nearest the source in feature space.
#[pyfunction]
fn select_target_full(features: Vec<Vec<f64>>, labels: Vec<usize>, classes: usize, source: usize) -> PyResult<usize> {
    let dim = features.first().map_or(0, Vec::len);
    let f = rows_to_tensor(&features, &[dim])?;
    let adm = attacks::attacking_distance(&attacks::class_means(&f, &labels, classes).map_err(err)?).map_err(err)?;
    attacks::select_target_full(&adm, source).map_err(err)
}

/// Last-layer gradient norms when the source samples are labelled as each
/// candidate, as `[(class, score)]`.
#[pyfunction]
#[pyo3(signature = (model, source_rows, candidates, include_bias=false))]
fn flame_scores(
    model: &PyModel,
    source_rows: Vec<Vec<f64>>,
    candidates: Vec<usize>,
    include_bias: bool,
) -> PyResult<Vec<(usize, f64)>> {
    let x = rows_to_tensor(&source_rows, model.inner.input_shape())?;
    Ok(attacks::flame_scores(&model.inner, &x, &candidates, include_bias)
        .map_err(err)?
        .scores)
}

#[pyfunction]
fn select_target_flame(model: &PyModel, source_rows: Vec<Vec<f64>>, source: usize) -> PyResult<usize> {
    let x = rows_to_tensor(&source_rows, model.inner.input_shape())?;
    let candidates: Vec<usize> = (0..model.inner.num_classes()).collect();
    let scores = attacks::flame_scores(&model.inner, &x, &candidates, false).map_err(err)?;
    attacks::select_target_flame(&scores, source).map_err(err)
}

/// `(mta, max_ata, max_ata_class)` for one confusion of labels and predictions.
#[pyfunction]
fn task_accuracies(labels: Vec<usize>, predicted: Vec<usize>, classes: usize, source: usize) -> PyResult<(f64, f64, usize)> {
    let p = Predictions::new(labels, predicted, classes).map_err(err)?;
    let (ata, class) = p.max_ata(source).map_err(err)?;
    Ok((p.mta(source).map_err(err)?, ata, class))
}

#[pyfunction]
fn ts_ata(labels: Vec<usize>, predicted: Vec<usize>, classes: usize, source: usize, target: usize) -> PyResult<f64> {
    Predictions::new(labels, predicted, classes)
        .and_then(|p| p.ts_ata(source, target))
        .map_err(err)
}

/// `[(name, description)]` of the built-in presets.
#[pyfunction]
fn list_presets() -> Vec<(String, String)> {
    presets::list()
}

#[pyfunction]
fn preset_toml(name: &str) -> PyResult<String> {
    presets::preset(name).and_then(|c| c.to_toml()).map_err(err)
}

/// Runs a TOML experiment config and writes its output directory. Returns
/// the headline summary as a dict.
#[pyfunction]
#[pyo3(signature = (config_toml, out=None, seed=None, rounds=None, epsilon=None))]
fn run_experiment<'py>(
    py: Python<'py>,
    config_toml: &str,
    out: Option<PathBuf>,
    seed: Option<u64>,
    rounds: Option<usize>,
    epsilon: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = ExperimentConfig::from_toml_str(config_toml).map_err(err)?;
    cfg.apply(&harness::Overrides { seed, out, rounds, epsilon });
    let s = py.detach(|| harness::run(&cfg)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("method", &s.method)?;
    d.set_item("seed", s.seed)?;
    d.set_item("epsilon", s.epsilon)?;
    d.set_item("rounds", s.rounds)?;
    d.set_item("converged_round", s.converged_round)?;
    d.set_item("horizon_start", s.horizon_start)?;
    d.set_item("horizon_end", s.horizon_end)?;
    d.set_item("best_ata", s.best_ata)?;
    d.set_item("best_max_ata", s.best_max_ata)?;
    d.set_item("best_mta", s.best_mta)?;
    d.set_item("final_mta", s.final_mta)?;
    d.set_item("out", cfg.out.display().to_string())?;
    Ok(d)
}

#[pymodule]
fn adafl_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_class::<PyDataset>()?;
    m.add_function(wrap_pyfunction!(train_and_scale, m)?)?;
    m.add_function(wrap_pyfunction!(fedavg, m)?)?;
    m.add_function(wrap_pyfunction!(ndc_filter, m)?)?;
    m.add_function(wrap_pyfunction!(attacking_distance, m)?)?;
    m.add_function(wrap_pyfunction!(select_target_full, m)?)?;
    m.add_function(wrap_pyfunction!(flame_scores, m)?)?;
    m.add_function(wrap_pyfunction!(select_target_flame, m)?)?;
    m.add_function(wrap_pyfunction!(task_accuracies, m)?)?;
    m.add_function(wrap_pyfunction!(ts_ata, m)?)?;
    m.add_function(wrap_pyfunction!(list_presets, m)?)?;
    m.add_function(wrap_pyfunction!(preset_toml, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
