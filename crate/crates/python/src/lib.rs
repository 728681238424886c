//! Python bindings. Support specs are given as in the CLI: a preset string
//! (`real:LO:HI`, `halfline-binary`, `halfline:LO:HI`, `symmetric:C:B`) or
//! inline JSON.

use gmle_core::cli::parse_spec;
use gmle_core::variants::{self, PairedSample};
use gmle_core::{identifiability, json, limits, simulation, solver, ExperimentConfig, FitConfig, Sample, SupportSpec};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn py_err(e: gmle_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(format!("json: {e}"))
}

#[pyclass(name = "MixingDistribution", module = "gmle", frozen, from_py_object)]
#[derive(Clone)]
struct PyMixing {
    inner: gmle_core::MixingDistribution,
}

#[pymethods]
impl PyMixing {
    /// Parses the JSON form `{atoms: [{loc, s, p}], symmetric}`, or a fit
    /// result holding one under `pi_hat`.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let v: serde_json::Value = serde_json::from_str(text).map_err(json_err)?;
        Ok(PyMixing {
            inner: gmle_core::cli::mixing_from_json(v).map_err(py_err)?,
        })
    }

    /// A point location `x` with scale `s` and weight one.
    #[staticmethod]
    fn point(x: f64, s: f64) -> PyResult<Self> {
        let inner =
            gmle_core::MixingDistribution::degenerate(gmle_core::Location::Point { x }, s).map_err(py_err)?;
        Ok(PyMixing { inner })
    }

    /// Point masses `(x, s, p)`; weights must sum to one.
    #[staticmethod]
    #[pyo3(signature = (atoms, symmetric = false))]
    fn from_points(atoms: Vec<(f64, f64, f64)>, symmetric: bool) -> PyResult<Self> {
        let atoms = atoms.into_iter().map(|(x, s, p)| gmle_core::Atom::point(x, s, p)).collect();
        Ok(PyMixing {
            inner: gmle_core::MixingDistribution::new(atoms, symmetric).map_err(py_err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        json::to_string(&self.inner).map_err(py_err)
    }

    /// `(center, tau2, scale, weight)` per atom; `tau2 = 0` for points.
    fn atoms(&self) -> Vec<(f64, f64, f64, f64)> {
        self.inner
            .atoms()
            .iter()
            .map(|a| (a.location.center(), a.location.tau2(), a.scale, a.weight))
            .collect()
    }

    #[getter]
    fn symmetric(&self) -> bool {
        self.inner.is_symmetric()
    }

    fn density(&self, y: f64) -> f64 {
        self.inner.density(y)
    }

    fn cdf(&self, y: f64) -> f64 {
        self.inner.cdf(y)
    }

    fn atomic_mass(&self, y: f64) -> f64 {
        self.inner.atomic_mass(y)
    }

    fn posterior_mean(&self, y: f64) -> PyResult<f64> {
        self.inner.posterior_mean(y).map_err(py_err)
    }

    fn location_cdf(&self, x: f64) -> f64 {
        self.inner.location_cdf(x)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!("MixingDistribution({} atoms, symmetric={})", self.inner.len(), self.inner.is_symmetric())
    }
}

#[pyclass(name = "FitResult", module = "gmle", frozen)]
struct PyFit {
    inner: solver::FitResult,
}

#[pymethods]
impl PyFit {
    #[getter]
    fn pi_hat(&self) -> PyMixing {
        PyMixing {
            inner: self.inner.pi_hat.clone(),
        }
    }

    #[getter]
    fn final_loglik(&self) -> f64 {
        self.inner.final_loglik
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn gradient_sup(&self) -> f64 {
        self.inner.gradient_sup
    }

    fn to_json(&self) -> PyResult<String> {
        json::to_string(&self.inner).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "FitResult(loglik={}, iterations={}, converged={})",
            self.inner.final_loglik, self.inner.iterations, self.inner.converged
        )
    }
}

fn spec_and_config(spec: &str, config: Option<&str>) -> PyResult<(SupportSpec, FitConfig)> {
    let spec = parse_spec(spec).map_err(py_err)?;
    let cfg = match config {
        Some(text) => serde_json::from_str(text).map_err(json_err)?,
        None => FitConfig::default(),
    };
    Ok((spec, cfg))
}

/// GMLE of the mixing distribution. `config` is FitConfig JSON.
#[pyfunction]
#[pyo3(signature = (values, spec, config = None))]
fn fit_gmle(py: Python<'_>, values: Vec<f64>, spec: &str, config: Option<&str>) -> PyResult<PyFit> {
    let (spec, cfg) = spec_and_config(spec, config)?;
    let sample = Sample::new(values).map_err(py_err)?;
    let inner = py.detach(|| solver::fit_gmle(&sample, &spec, &cfg)).map_err(py_err)?;
    Ok(PyFit { inner })
}

/// Product-form fit with independent location and scale on `(−∞, 0] × S`.
#[pyfunction]
#[pyo3(signature = (values, spec, config = None))]
fn fit_independent(py: Python<'_>, values: Vec<f64>, spec: &str, config: Option<&str>) -> PyResult<PyFit> {
    let (spec, cfg) = spec_and_config(spec, config)?;
    let sample = Sample::new(values).map_err(py_err)?;
    let inner = py
        .detach(|| variants::fit_independent(&sample, &spec, &cfg))
        .map_err(py_err)?;
    Ok(PyFit { inner })
}

/// Fit from pairs of draws sharing one latent location and scale.
#[pyfunction]
#[pyo3(signature = (pairs, spec, config = None))]
fn fit_replicated(py: Python<'_>, pairs: Vec<(f64, f64)>, spec: &str, config: Option<&str>) -> PyResult<PyFit> {
    let (spec, cfg) = spec_and_config(spec, config)?;
    let sample = PairedSample::new(pairs).map_err(py_err)?;
    let inner = py
        .detach(|| variants::fit_replicated(&sample, &spec, &cfg))
        .map_err(py_err)?;
    Ok(PyFit { inner })
}

#[pyfunction]
fn solve_eta(c: f64, b: f64) -> PyResult<f64> {
    Ok(limits::solve_eta(c, b).map_err(py_err)?.eta)
}

#[pyfunction]
fn wrap_mixing(pi_bar: &PyMixing, a_bar: f64, b_bar: f64) -> PyResult<PyMixing> {
    let inner = identifiability::wrap_mixing(&pi_bar.inner, a_bar, b_bar).map_err(py_err)?;
    Ok(PyMixing { inner })
}

/// Sorted sample of size `n`.
#[pyfunction]
fn sample_mixture(pi: &PyMixing, n: usize, seed: u64) -> PyResult<Vec<f64>> {
    Ok(simulation::sample_mixture(&pi.inner, n, seed).map_err(py_err)?.values().to_vec())
}

#[pyfunction]
fn limit_cdf_halfline(y: f64, truth: &PyMixing) -> f64 {
    limits::limit_cdf_halfline(y, |t| truth.inner.cdf(t))
}

#[pyfunction]
fn limit_cdf_independent(y: f64, truth: &PyMixing) -> PyResult<f64> {
    limits::limit_cdf_independent_general(y, &truth.inner).map_err(py_err)
}

#[pyfunction]
fn limit_cdf_independent_gaussian(y: f64) -> f64 {
    limits::limit_cdf_independent_gaussian(y)
}

#[pyfunction]
fn truncnorm_conv_density(y: f64) -> f64 {
    limits::truncnorm_conv_density(y)
}

/// `(eta, band_mass_per_side, interior_mass)` for the symmetric family.
#[pyfunction]
fn symmetric_limit(truth: &PyMixing, c: f64, b: f64) -> PyResult<(f64, f64, f64)> {
    let lim = limits::limit_mixing_symmetric(|t| truth.inner.cdf(t), c, b, 2).map_err(py_err)?;
    Ok((lim.eta, lim.band_mass_per_side, lim.interior_mass))
}

/// Runs an ExperimentConfig (JSON) and returns the report as JSON.
#[pyfunction]
#[pyo3(signature = (config, workers = 1))]
fn run_experiment(py: Python<'_>, config: &str, workers: usize) -> PyResult<String> {
    let cfg: ExperimentConfig = serde_json::from_str(config).map_err(json_err)?;
    let report = py.detach(|| simulation::run_experiment(&cfg, workers)).map_err(py_err)?;
    json::to_string(&report).map_err(py_err)
}

#[pymodule]
fn gmle(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMixing>()?;
    m.add_class::<PyFit>()?;
    m.add_function(wrap_pyfunction!(fit_gmle, m)?)?;
    m.add_function(wrap_pyfunction!(fit_independent, m)?)?;
    m.add_function(wrap_pyfunction!(fit_replicated, m)?)?;
    m.add_function(wrap_pyfunction!(solve_eta, m)?)?;
    m.add_function(wrap_pyfunction!(wrap_mixing, m)?)?;
    m.add_function(wrap_pyfunction!(sample_mixture, m)?)?;
    m.add_function(wrap_pyfunction!(limit_cdf_halfline, m)?)?;
    m.add_function(wrap_pyfunction!(limit_cdf_independent, m)?)?;
    m.add_function(wrap_pyfunction!(limit_cdf_independent_gaussian, m)?)?;
    m.add_function(wrap_pyfunction!(truncnorm_conv_density, m)?)?;
    m.add_function(wrap_pyfunction!(symmetric_limit, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
