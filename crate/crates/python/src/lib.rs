//! Python bindings: scenarios, validation, simulation and the experiment suite.
//!
//! Reports cross the boundary as plain dicts built from their JSON form.

use std::path::PathBuf;

use ncdiff::analysis::{
    check_absorption, continuity_factor, energy_experiment, pullback_experiment, run_decomposition,
    run_regularity_split, self_convergence,
};
use ncdiff::model::{assess_scenario, random_field};
use ncdiff::report::DecompositionSummary;
use ncdiff::{BoundsParameters, Error, ScenarioConfig};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

create_exception!(ncdiff_py, NcdiffError, PyException);

fn py_err(e: Error) -> PyErr {
    NcdiffError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| py_err(e.into()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// A scenario configuration with its spectral basis.
#[pyclass(name = "Scenario", module = "ncdiff_py", skip_from_py_object)]
#[derive(Clone)]
pub struct PyScenario {
    inner: ncdiff::Scenario,
}

impl PyScenario {
    fn build(cfg: ScenarioConfig) -> PyResult<Self> {
        Ok(PyScenario {
            inner: ncdiff::Scenario::new(cfg).map_err(py_err)?,
        })
    }
}

#[pymethods]
impl PyScenario {
    /// Bundled nonlinear scenario with delay and periodic forcing.
    #[staticmethod]
    fn default() -> PyResult<Self> {
        Self::build(ScenarioConfig::default_nonlinear())
    }

    /// Bundled linear, delay-free scenario.
    #[staticmethod]
    fn linear() -> PyResult<Self> {
        Self::build(ScenarioConfig::linear_single_mode())
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Self::build(ScenarioConfig::from_json(text).map_err(py_err)?)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Self::build(ScenarioConfig::load(&path).map_err(py_err)?)
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.config.to_json().map_err(py_err)
    }

    /// Copy with `Δt` replaced; the step must divide the delay.
    fn with_step(&self, dt: f64) -> PyResult<Self> {
        let mut cfg = self.inner.config.clone();
        cfg.set_step(dt).map_err(py_err)?;
        Self::build(cfg)
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.config.name.clone()
    }

    #[getter]
    fn mu(&self) -> f64 {
        self.inner.mu()
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.inner.dt()
    }

    #[getter]
    fn modes(&self) -> usize {
        self.inner.basis.len()
    }

    #[getter]
    fn eigenvalues(&self) -> Vec<f64> {
        self.inner.basis.eigenvalues().to_vec()
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.inner.config.integration.horizon
    }

    /// Every assumption check, notices and the derived bounds constants.
    fn validate<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let rep = assess_scenario(&self.inner.config).map_err(py_err)?;
        let out = to_py(py, &rep)?;
        out.cast::<PyDict>()?.set_item("passed", rep.passed())?;
        Ok(out)
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(name={:?}, modes={}, mu={}, dt={})",
            self.inner.config.name,
            self.inner.basis.len(),
            self.inner.mu(),
            self.inner.dt()
        )
    }
}

/// Integrates the scenario and returns `(times, coefficients)` at every knot.
#[pyfunction]
#[pyo3(signature = (scenario, horizon=None))]
fn simulate(
    py: Python<'_>,
    scenario: &PyScenario,
    horizon: Option<f64>,
) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
    let scn = scenario.inner.clone();
    let horizon = horizon.unwrap_or(scn.config.integration.horizon);
    py.detach(move || {
        let (mut times, mut states) = (Vec::new(), Vec::new());
        ncdiff::simulate(&scn, horizon, |v| {
            times.push(v.t);
            states.push(v.states[0].coeffs().to_vec());
            Ok(())
        })?;
        Ok((times, states))
    })
    .map_err(py_err)
}

/// Decay constants for the given data, maximizing `β₁` over the admissible `β`.
#[pyfunction]
fn bounds<'py>(
    py: Python<'py>,
    lambda1: f64,
    bound_l: f64,
    c_phi: f64,
    mu: f64,
    zeta: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let b = BoundsParameters::optimize(lambda1, bound_l, c_phi, mu, zeta).map_err(py_err)?;
    let out = to_py(py, &b)?;
    out.cast::<PyDict>()?.set_item("prefactor", b.prefactor())?;
    Ok(out)
}

fn horizon_of(scenario: &PyScenario, horizon: Option<f64>) -> f64 {
    horizon.unwrap_or(scenario.inner.config.integration.horizon)
}

#[pyfunction]
#[pyo3(signature = (scenario, horizon=None))]
fn energy<'py>(
    py: Python<'py>,
    scenario: &PyScenario,
    horizon: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let (scn, h) = (scenario.inner.clone(), horizon_of(scenario, horizon));
    let r = py
        .detach(move || energy_experiment(&scn, h))
        .map_err(py_err)?;
    to_py(py, &r)
}

#[pyfunction]
#[pyo3(signature = (scenario, horizon, steps_per_delay, reference))]
fn convergence<'py>(
    py: Python<'py>,
    scenario: &PyScenario,
    horizon: f64,
    steps_per_delay: Vec<usize>,
    reference: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let scn = scenario.inner.clone();
    let r = py
        .detach(move || self_convergence(&scn, horizon, &steps_per_delay, reference))
        .map_err(py_err)?;
    to_py(py, &r)
}

#[pyfunction]
#[pyo3(signature = (scenario, members=20, horizon=None, seed=42))]
fn absorption<'py>(
    py: Python<'py>,
    scenario: &PyScenario,
    members: usize,
    horizon: Option<f64>,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let (scn, h) = (scenario.inner.clone(), horizon_of(scenario, horizon));
    let r = py
        .detach(move || {
            let b = ncdiff::validate_scenario(&scn.config)?;
            check_absorption(&scn, &b, members, h, seed)
        })
        .map_err(py_err)?;
    to_py(py, &r)
}

#[pyfunction]
#[pyo3(signature = (scenario, horizon=None))]
fn decomposition<'py>(
    py: Python<'py>,
    scenario: &PyScenario,
    horizon: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let (scn, h) = (scenario.inner.clone(), horizon_of(scenario, horizon));
    let r = py
        .detach(move || run_decomposition(&scn, h))
        .map_err(py_err)?;
    let summary = DecompositionSummary::from(&r);
    let out = to_py(py, &r)?;
    out.cast::<PyDict>()?
        .set_item("summary", to_py(py, &summary)?)?;
    Ok(out)
}

#[pyfunction]
#[pyo3(signature = (scenario, horizon=None, smoothing_modes=1))]
fn regularity<'py>(
    py: Python<'py>,
    scenario: &PyScenario,
    horizon: Option<f64>,
    smoothing_modes: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let (scn, h) = (scenario.inner.clone(), horizon_of(scenario, horizon));
    let r = py
        .detach(move || run_regularity_split(&scn, h, smoothing_modes))
        .map_err(py_err)?;
    to_py(py, &r)
}

/// Lipschitz exponent for a random unit perturbation of size `scale`.
#[pyfunction]
#[pyo3(signature = (scenario, scale, horizon=None, seed=42))]
fn continuity<'py>(
    py: Python<'py>,
    scenario: &PyScenario,
    scale: f64,
    horizon: Option<f64>,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let (scn, h) = (scenario.inner.clone(), horizon_of(scenario, horizon));
    let r = py
        .detach(move || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dir = random_field(&scn.basis, &mut rng, 1.0);
            let eps = scn.config.epsilon.value(scn.config.tau).abs();
            let norm = (scn.basis.norm_sobolev_sq(&dir, 0.0)
                + eps * scn.basis.norm_sobolev_sq(&dir, 1.0))
            .sqrt();
            let chi2 = scn.initial.perturbed(&dir.scaled(1.0 / norm), scale);
            continuity_factor(&scn, &scn.initial, &chi2, h)
        })
        .map_err(py_err)?;
    to_py(py, &r)
}

#[pyfunction]
#[pyo3(signature = (scenario, levels=6, cloud_size=8, seed=42, t_star=None, envelope=false))]
fn pullback<'py>(
    py: Python<'py>,
    scenario: &PyScenario,
    levels: usize,
    cloud_size: usize,
    seed: u64,
    t_star: Option<f64>,
    envelope: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let scn = scenario.inner.clone();
    let t_star = t_star.unwrap_or(scn.config.tau);
    let r = py
        .detach(move || {
            let b = if envelope {
                Some(ncdiff::validate_scenario(&scn.config)?)
            } else {
                None
            };
            pullback_experiment(&scn, t_star, levels, cloud_size, seed, b.as_ref(), None)
        })
        .map_err(py_err)?;
    let out = to_py(py, &r)?;
    let d = out.cast::<PyDict>()?;
    d.set_item("final_value", r.final_value())?;
    d.set_item("within_envelope", r.within_envelope())?;
    Ok(out)
}

#[pymodule]
fn ncdiff_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("NcdiffError", m.py().get_type::<NcdiffError>())?;
    m.add("__version__", ncdiff::report::VERSION)?;
    m.add_class::<PyScenario>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(bounds, m)?)?;
    m.add_function(wrap_pyfunction!(energy, m)?)?;
    m.add_function(wrap_pyfunction!(convergence, m)?)?;
    m.add_function(wrap_pyfunction!(absorption, m)?)?;
    m.add_function(wrap_pyfunction!(decomposition, m)?)?;
    m.add_function(wrap_pyfunction!(regularity, m)?)?;
    m.add_function(wrap_pyfunction!(continuity, m)?)?;
    m.add_function(wrap_pyfunction!(pullback, m)?)?;
    Ok(())
}
