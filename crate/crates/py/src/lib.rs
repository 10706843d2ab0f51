//! Python bindings. Structured results cross the boundary as JSON and are
//! decoded into plain dicts and lists on the Python side.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyKeyError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use taskdrop::experiment::{self, ExperimentConfig, ExperimentOutput};
use taskdrop::masking::{self, skip_transfer_probability as skip_p};
use taskdrop::taskgen::{generate_task_family, FamilySpec, Preset};
use taskdrop::trainer;
use taskdrop::{AccuracyMatrix, Error};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        Error::Config(_) | Error::Domain(_) | Error::Data(_) | Error::Shape(_) | Error::DegenerateDenominator(_) => {
            PyValueError::new_err(e.to_string())
        }
        Error::Lookup(_) | Error::Index(_) => PyKeyError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn loads<'py>(py: Python<'py>, s: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (s,))
}

fn json<T: serde::Serialize>(py: Python<'_>, v: &T) -> PyResult<Py<PyAny>> {
    let s = serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(loads(py, &s)?.unbind())
}

fn matrix(rows: Vec<Option<Vec<f64>>>) -> PyResult<AccuracyMatrix> {
    AccuracyMatrix::from_rows(rows).map_err(to_py)
}

/// Per-task unit masks drawn from a seeded stream.
#[pyclass(name = "MaskRegistry")]
struct PyMaskRegistry(masking::MaskRegistry);

#[pymethods]
impl PyMaskRegistry {
    #[new]
    fn new(seed: u64) -> Self {
        PyMaskRegistry(masking::MaskRegistry::new(seed))
    }

    /// Draws and stores the mask for `task`; returns one 0/1 list per layer.
    fn generate(&mut self, task: usize, widths: Vec<usize>, p: f64) -> PyResult<Vec<Vec<u8>>> {
        let m = self.0.generate(task, &widths, p).map_err(to_py)?;
        Ok((0..m.widths().len()).map(|l| m.layer(l).to_vec()).collect())
    }

    fn get(&self, task: usize) -> PyResult<Vec<Vec<u8>>> {
        let m = self.0.get(task).ok_or_else(|| PyKeyError::new_err(task))?;
        Ok((0..m.widths().len()).map(|l| m.layer(l).to_vec()).collect())
    }

    /// Retained fraction per layer for `task`.
    fn retention(&self, task: usize) -> PyResult<Vec<f64>> {
        Ok(self.0.get(task).ok_or_else(|| PyKeyError::new_err(task))?.retention())
    }

    /// Pooled empirical frequency of each skip gap `s` observed in the registry.
    fn skip_frequencies(&self) -> PyResult<Vec<(u32, f64)>> {
        let stats = masking::empirical_skip_stats(&self.0).map_err(to_py)?;
        Ok(stats.opportunities.keys().map(|&s| (s, stats.frequency(s))).collect())
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().map_err(to_py)
    }

    #[staticmethod]
    fn from_json(s: &str) -> PyResult<Self> {
        masking::MaskRegistry::from_json(s).map(PyMaskRegistry).map_err(to_py)
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.0 == other.0
    }
}

/// Probability that a unit active at task t is next active at task t + s.
#[pyfunction]
fn skip_transfer_probability(p: f64, s: u32) -> PyResult<f64> {
    skip_p(p, s).map_err(to_py)
}

/// Mean of row `t` of a lower-triangular accuracy matrix (rows may be None).
#[pyfunction]
fn averaged_accuracy(rows: Vec<Option<Vec<f64>>>, t: usize) -> PyResult<f64> {
    trainer::averaged_accuracy(&matrix(rows)?, t).map_err(to_py)
}

/// Forgetting ratio at row `t`, in percent.
#[pyfunction]
fn forgetting_ratio(rows: Vec<Option<Vec<f64>>>, t: usize, random: Vec<f64>, joint: Vec<f64>) -> PyResult<f64> {
    trainer::forgetting_ratio(&matrix(rows)?, t, &random, &joint).map_err(to_py)
}

/// Generates a family from a preset name or a JSON spec and returns its task specs.
#[pyfunction]
#[pyo3(signature = (seed, preset = None, spec_json = None))]
fn generate_family(py: Python<'_>, seed: u64, preset: Option<&str>, spec_json: Option<&str>) -> PyResult<Py<PyAny>> {
    let spec: FamilySpec = match (preset, spec_json) {
        (Some(p), None) => Preset::parse(p).map_err(to_py)?.spec(),
        (None, Some(s)) => serde_json::from_str(s).map_err(|e| PyValueError::new_err(e.to_string()))?,
        (None, None) => FamilySpec::default(),
        (Some(_), Some(_)) => return Err(PyValueError::new_err("pass either preset or spec_json, not both")),
    };
    let family = generate_task_family(seed, &spec).map_err(to_py)?;
    json(py, &family.tasks)
}

fn config(s: &str) -> PyResult<ExperimentConfig> {
    let cfg = ExperimentConfig::from_json(s).map_err(to_py)?;
    cfg.validate().map_err(to_py)?;
    Ok(cfg)
}

fn output(py: Python<'_>, out: &ExperimentOutput) -> PyResult<Py<PyAny>> {
    let d = pyo3::types::PyDict::new(py);
    d.set_item("runs", json(py, &out.runs)?)?;
    d.set_item("summary", json(py, &out.summary)?)?;
    Ok(d.into_any().unbind())
}

/// Runs every configured variant plus the joint reference. Returns
/// {"runs": [...], "summary": [...]} and writes files when `out` is given.
#[pyfunction]
#[pyo3(signature = (config_json, out = None))]
fn run_experiment(py: Python<'_>, config_json: &str, out: Option<PathBuf>) -> PyResult<Py<PyAny>> {
    let cfg = config(config_json)?;
    let res = py.detach(|| experiment::run_experiment(&cfg, out.as_deref())).map_err(to_py)?;
    output(py, &res)
}

#[pyfunction]
#[pyo3(signature = (config_json, grid, out = None))]
fn sweep_retention(py: Python<'_>, config_json: &str, grid: Vec<f64>, out: Option<PathBuf>) -> PyResult<Py<PyAny>> {
    let cfg = config(config_json)?;
    let res = py.detach(|| experiment::sweep_retention(&cfg, &grid, out.as_deref())).map_err(to_py)?;
    output(py, &res)
}

#[pyfunction]
#[pyo3(signature = (config_json, grid, out = None))]
fn compare_dropout(py: Python<'_>, config_json: &str, grid: Vec<f64>, out: Option<PathBuf>) -> PyResult<Py<PyAny>> {
    let cfg = config(config_json)?;
    let res = py.detach(|| experiment::compare_dropout(&cfg, &grid, out.as_deref())).map_err(to_py)?;
    output(py, &res)
}

#[pymodule]
fn taskdrop_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMaskRegistry>()?;
    m.add_function(wrap_pyfunction!(skip_transfer_probability, m)?)?;
    m.add_function(wrap_pyfunction!(averaged_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(forgetting_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(generate_family, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_retention, m)?)?;
    m.add_function(wrap_pyfunction!(compare_dropout, m)?)?;
    Ok(())
}
