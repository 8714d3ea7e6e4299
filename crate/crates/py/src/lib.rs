//! Python bindings: synthetic data, dataset preparation, model training,
//! prediction, persistence and evaluation.

use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use wildfire_core::clean::{read_clean_csv, write_clean_csv};
use wildfire_core::eval::{self, ModelArtifact, ModelKind, ModelParams};
use wildfire_core::features::{feature_matrix, prepare_dataset};
use wildfire_core::forest::ForestParams;
use wildfire_core::gbt::GbtParams;
use wildfire_core::lstm::LstmParams;
use wildfire_core::synth::{synth_records, DEFAULT_SYNTH_SEED};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn metrics_dict<'py>(py: Python<'py>, m: &eval::MetricSet) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("mae_days", m.mae_days)?;
    d.set_item("rmse_days", m.rmse_days)?;
    d.set_item("r2_days", m.r2_days)?;
    Ok(d)
}

/// Overlay `overrides` (a JSON object) on the default parameters of `kind`.
fn params_for(kind: ModelKind, overrides: Option<&str>) -> PyResult<ModelParams> {
    let defaults = match kind {
        ModelKind::Rf => ModelParams::Rf(ForestParams::default()),
        ModelKind::Gbt => ModelParams::Gbt(GbtParams::default()),
        ModelKind::Lstm => ModelParams::Lstm(LstmParams::default()),
    };
    let Some(text) = overrides else { return Ok(defaults) };
    let mut value = serde_json::to_value(&defaults).map_err(err)?;
    let extra: serde_json::Map<String, serde_json::Value> = serde_json::from_str(text).map_err(err)?;
    let values = value["values"].as_object_mut().expect("params serialize as an object");
    for (k, v) in extra {
        if !values.contains_key(&k) {
            return Err(err(format!("unknown {kind} parameter {k:?}")));
        }
        values.insert(k, v);
    }
    serde_json::from_value(value).map_err(err)
}

/// Cleaned-format CSV text of `rows` synthetic fires.
#[pyfunction]
#[pyo3(signature = (rows, seed=None))]
fn synth_csv(rows: usize, seed: Option<u64>) -> String {
    write_clean_csv(&synth_records(rows, seed.unwrap_or(DEFAULT_SYNTH_SEED)), None)
}

#[pyfunction]
fn derive_seed(master: u64, stream: u64) -> u64 {
    wildfire_core::rng::derive_seed(master, stream)
}

/// MAE, RMSE and R² in days.
#[pyfunction]
fn compute_metrics<'py>(py: Python<'py>, true_days: Vec<f64>, pred_days: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
    metrics_dict(py, &eval::compute_metrics(&true_days, &pred_days).map_err(err)?)
}

/// A cleaned dataset with features built and a temporal train/test split.
#[pyclass(frozen)]
struct Dataset {
    inner: wildfire_core::features::Dataset,
}

#[pymethods]
impl Dataset {
    #[new]
    #[pyo3(signature = (csv_text, split_year=2018))]
    fn new(csv_text: &str, split_year: i32) -> PyResult<Self> {
        let records = read_clean_csv(csv_text.as_bytes()).map_err(err)?;
        Ok(Self { inner: prepare_dataset(&records, split_year).map_err(err)? })
    }

    #[getter]
    fn n_rows(&self) -> usize {
        self.inner.n_rows()
    }

    #[getter]
    fn n_train(&self) -> usize {
        self.inner.train_indices().len()
    }

    #[getter]
    fn n_test(&self) -> usize {
        self.inner.test_indices().len()
    }

    #[getter]
    fn feature_names(&self) -> Vec<String> {
        self.inner.spec.column_names()
    }

    fn __repr__(&self) -> String {
        format!("Dataset(rows={}, train={}, test={})", self.n_rows(), self.n_train(), self.n_test())
    }
}

/// A trained rf, gbt or lstm model.
#[pyclass(frozen)]
struct Model {
    inner: ModelArtifact,
}

#[pymethods]
impl Model {
    /// Fit on the training split. `params` is a JSON object of overrides.
    #[staticmethod]
    #[pyo3(signature = (dataset, kind, params=None, seed=42))]
    fn train(py: Python<'_>, dataset: &Dataset, kind: &str, params: Option<&str>, seed: u64) -> PyResult<Self> {
        let kind: ModelKind = kind.parse().map_err(err)?;
        let params = params_for(kind, params)?;
        let ds = &dataset.inner;
        let inner = py.detach(|| eval::train_model(&params, ds, seed)).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: ModelArtifact::load(&path).map_err(err)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: ModelArtifact::from_json(text).map_err(err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(err)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind.name()
    }

    /// Hyperparameters as a JSON object.
    #[getter]
    fn params(&self) -> String {
        let v = serde_json::to_value(&self.inner.params).expect("params serialize");
        v["values"].to_string()
    }

    #[getter]
    fn test_metrics<'py>(&self, py: Python<'py>) -> PyResult<Option<Bound<'py, PyDict>>> {
        self.inner.metrics.as_ref().map(|m| metrics_dict(py, m)).transpose()
    }

    #[getter]
    fn importances(&self) -> Option<Vec<f64>> {
        self.inner.importances().map(<[f64]>::to_vec)
    }

    /// Predicted durations in days for rows of a CSV with at least
    /// ALARM_DATE, GIS_ACRES, LATITUDE and LONGITUDE.
    fn predict_csv(&self, csv_text: &str) -> PyResult<Vec<f64>> {
        let records = wildfire_core::cli::read_prediction_rows(csv_text.as_bytes()).map_err(err)?;
        let x = feature_matrix(&records, &self.inner.feature_spec).map_err(err)?;
        self.inner.predict_days(&x).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Model(kind={}, seed={})", self.inner.kind, self.inner.master_seed)
    }
}

fn artifacts(models: &[Py<Model>], py: Python<'_>) -> Vec<ModelArtifact> {
    models.iter().map(|m| m.borrow(py).inner.clone()).collect()
}

/// Test-set evaluation of `models` as a JSON document.
#[pyfunction]
fn evaluate(py: Python<'_>, dataset: &Dataset, models: Vec<Py<Model>>) -> PyResult<String> {
    let report = eval::evaluate_artifacts(&dataset.inner, &artifacts(&models, py)).map_err(err)?;
    serde_json::to_string(&report).map_err(err)
}

/// Write metrics, residual bins and figures into `out_dir`; returns file names.
#[pyfunction]
fn write_report(py: Python<'_>, dataset: &Dataset, models: Vec<Py<Model>>, out_dir: PathBuf) -> PyResult<Vec<String>> {
    let report = eval::evaluate_artifacts(&dataset.inner, &artifacts(&models, py)).map_err(err)?;
    eval::emit_report(&report, &out_dir).map_err(err)
}

#[pymodule]
fn wildfire_duration(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Dataset>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(synth_csv, m)?)?;
    m.add_function(wrap_pyfunction!(derive_seed, m)?)?;
    m.add_function(wrap_pyfunction!(compute_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(write_report, m)?)?;
    Ok(())
}
