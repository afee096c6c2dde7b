//! Python bindings for `kinex-core`.
//!
//! States are passed as lists of floats and validated onto the simplex on
//! the way in. Long integrations release the GIL.

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use kinex_core::config::RunConfig;
use kinex_core::error::Error;
use kinex_core::{metrics, noise, sde, NoiseKind, StateVector};

fn to_py(e: Error) -> PyErr {
    match e.exit_code() {
        3 => PyOSError::new_err(e.to_string()),
        1 => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn state(x: Vec<f64>) -> PyResult<StateVector> {
    StateVector::new(x).map_err(to_py)
}

fn parse_noise(name: &str) -> PyResult<NoiseKind> {
    name.parse().map_err(to_py)
}

/// Income classes with precomputed exchange coefficients.
#[pyclass(frozen, name = "ClassSystem", module = "kinex")]
struct PyClassSystem {
    inner: kinex_core::ClassSystem,
}

#[pymethods]
impl PyClassSystem {
    #[new]
    #[pyo3(signature = (n = 10, delta_r = 10.0, s_unit = 0.1))]
    fn new(n: usize, delta_r: f64, s_unit: f64) -> PyResult<Self> {
        let inner = kinex_core::ClassSystem::new(n, delta_r, s_unit).map_err(to_py)?;
        Ok(PyClassSystem { inner })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn delta_r(&self) -> f64 {
        self.inner.delta_r()
    }

    #[getter]
    fn s_unit(&self) -> f64 {
        self.inner.s_unit()
    }

    #[getter]
    fn ratio(&self) -> f64 {
        self.inner.ratio()
    }

    #[getter]
    fn incomes(&self) -> Vec<f64> {
        self.inner.incomes().to_vec()
    }

    /// Probability that an `h`-individual pays a `k`-individual (1-based).
    fn p(&self, h: usize, k: usize) -> PyResult<f64> {
        kinex_core::transition_probability(h, k, self.inner.n()).map_err(to_py)
    }

    /// Probability that an `h`-individual meeting a `k`-individual ends in
    /// class `i` (1-based).
    fn coefficient(&self, i: usize, h: usize, k: usize) -> PyResult<f64> {
        self.inner.interaction_coefficient(i, h, k).map_err(to_py)
    }

    fn stochasticity_residual(&self) -> f64 {
        self.inner.stochasticity_residual()
    }

    fn drift(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.drift(&state(x)?).map_err(to_py)
    }

    fn drift_divergence(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.drift_divergence(&state(x)?).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "ClassSystem(n={}, delta_r={}, s_unit={})",
            self.inner.n(),
            self.inner.delta_r(),
            self.inner.s_unit()
        )
    }
}

/// Sampled states of one realization.
#[pyclass(frozen, name = "Trajectory", module = "kinex")]
struct PyTrajectory {
    inner: sde::Trajectory,
}

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn times(&self) -> Vec<u64> {
        self.inner.times.clone()
    }

    #[getter]
    fn states(&self) -> Vec<Vec<f64>> {
        self.inner.states.iter().map(|x| x.as_slice().to_vec()).collect()
    }

    #[getter]
    fn rejected_steps(&self) -> u64 {
        self.inner.rejected_steps
    }

    #[getter]
    fn fallback_steps(&self) -> u64 {
        self.inner.fallback_steps
    }

    /// `{"mu": [...], "gini": [...], "mobility": [...]}`; mobility is NaN
    /// where undefined.
    fn observables<'py>(&self, py: Python<'py>, system: &PyClassSystem) -> PyResult<Bound<'py, PyDict>> {
        let out = PyDict::new(py);
        for series in metrics::observables(&self.inner, &system.inner) {
            out.set_item(series.name, series.values)?;
        }
        Ok(out)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyfunction]
fn transition_probability(h: usize, k: usize, n: usize) -> PyResult<f64> {
    kinex_core::transition_probability(h, k, n).map_err(to_py)
}

#[pyfunction]
fn additive_matrix(n: usize) -> PyResult<Vec<Vec<f64>>> {
    noise::additive_matrix(n).map(|m| m.rows()).map_err(to_py)
}

#[pyfunction]
fn multiplicative_matrix(x: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
    Ok(noise::multiplicative_matrix(&state(x)?).rows())
}

#[pyfunction]
fn conserving_additive_matrix(incomes: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
    noise::conserving_additive_matrix(&incomes)
        .map(|m| m.rows())
        .map_err(to_py)
}

#[pyfunction]
fn total_income(x: Vec<f64>, incomes: Vec<f64>) -> PyResult<f64> {
    Ok(metrics::total_income(&state(x)?, &incomes))
}

#[pyfunction]
fn gini(x: Vec<f64>, incomes: Vec<f64>) -> PyResult<f64> {
    Ok(metrics::gini(&state(x)?, &incomes))
}

#[pyfunction]
fn mobility(x: Vec<f64>, system: &PyClassSystem) -> PyResult<f64> {
    metrics::mobility(&state(x)?, &system.inner).map_err(to_py)
}

#[pyfunction]
fn pearson(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    metrics::pearson_slices(&a, &b).map_err(to_py)
}

/// `[(left, right, count), ...]` over bins `[j w, (j + 1) w)`.
#[pyfunction]
fn histogram(samples: Vec<f64>, bin_width: f64) -> PyResult<Vec<(f64, f64, u64)>> {
    let h = metrics::histogram(&samples, bin_width).map_err(to_py)?;
    Ok(h.bins().collect())
}

/// Relaxes `x0` without noise. Returns `(state, converged, residual, steps)`.
#[pyfunction]
#[pyo3(signature = (system, x0, dt = 1.0, tol = sde::DEFAULT_EQUILIBRIUM_TOL, max_steps = sde::DEFAULT_EQUILIBRIUM_MAX_STEPS))]
fn find_equilibrium(
    py: Python<'_>,
    system: &PyClassSystem,
    x0: Vec<f64>,
    dt: f64,
    tol: f64,
    max_steps: u64,
) -> PyResult<(Vec<f64>, bool, f64, u64)> {
    let x0 = state(x0)?;
    let eq = py
        .detach(|| sde::find_equilibrium(&x0, &system.inner, dt, tol, max_steps))
        .map_err(to_py)?;
    Ok((eq.state.into_inner(), eq.converged, eq.residual, eq.steps))
}

#[allow(clippy::too_many_arguments)]
fn sde_config(
    noise: &str,
    sqrt_gamma: f64,
    steps: u64,
    dt: f64,
    seed: u64,
    sample_every: u64,
    max_retries: u32,
) -> PyResult<kinex_core::SdeConfig> {
    let cfg = kinex_core::SdeConfig {
        dt,
        sqrt_gamma,
        steps,
        noise: parse_noise(noise)?,
        seed,
        sample_every,
        max_retries,
    };
    cfg.validate().map_err(to_py)?;
    Ok(cfg)
}

#[pyfunction]
#[pyo3(signature = (
    system, x0, noise = "additive", sqrt_gamma = 1e-4, steps = 20_000, dt = 1.0,
    seed = 0, sample_every = 100, max_retries = sde::DEFAULT_MAX_RETRIES,
))]
#[allow(clippy::too_many_arguments)]
fn run_trajectory(
    py: Python<'_>,
    system: &PyClassSystem,
    x0: Vec<f64>,
    noise: &str,
    sqrt_gamma: f64,
    steps: u64,
    dt: f64,
    seed: u64,
    sample_every: u64,
    max_retries: u32,
) -> PyResult<PyTrajectory> {
    let cfg = sde_config(noise, sqrt_gamma, steps, dt, seed, sample_every, max_retries)?;
    let x0 = state(x0)?;
    let inner = py
        .detach(|| sde::run_trajectory(&x0, &system.inner, &cfg))
        .map_err(to_py)?;
    Ok(PyTrajectory { inner })
}

#[pyfunction]
#[pyo3(signature = (
    system, x0, realizations = 24, noise = "additive", sqrt_gamma = 1e-3, steps = 20_000,
    dt = 1.0, seed = 0, sample_every = 100, max_retries = sde::DEFAULT_MAX_RETRIES, workers = None,
))]
#[allow(clippy::too_many_arguments)]
fn run_ensemble(
    py: Python<'_>,
    system: &PyClassSystem,
    x0: Vec<f64>,
    realizations: usize,
    noise: &str,
    sqrt_gamma: f64,
    steps: u64,
    dt: f64,
    seed: u64,
    sample_every: u64,
    max_retries: u32,
    workers: Option<usize>,
) -> PyResult<Vec<PyTrajectory>> {
    let cfg = sde_config(noise, sqrt_gamma, steps, dt, seed, sample_every, max_retries)?;
    let x0 = state(x0)?;
    let trajs = py
        .detach(|| match workers {
            Some(w) => sde::run_ensemble_with_workers(&x0, &system.inner, &cfg, realizations, w),
            None => sde::run_ensemble(&x0, &system.inner, &cfg, realizations),
        })
        .map_err(to_py)?;
    Ok(trajs.into_iter().map(|inner| PyTrajectory { inner }).collect())
}

/// Pooled per-class statistics of an ensemble.
#[pyfunction]
#[pyo3(signature = (trajectories, system, classes = None, bin_width = 0.005))]
fn summarize<'py>(
    py: Python<'py>,
    trajectories: Vec<PyRef<'py, PyTrajectory>>,
    system: &PyClassSystem,
    classes: Option<Vec<usize>>,
    bin_width: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let trajs: Vec<sde::Trajectory> = trajectories.iter().map(|t| t.inner.clone()).collect();
    let classes = classes.unwrap_or_else(|| (1..=system.inner.n()).collect());
    let mut s = metrics::summarize_ensemble(&trajs, &classes, bin_width).map_err(to_py)?;
    s.correlations = metrics::mean_correlations(&trajs, &system.inner);

    let out = PyDict::new(py);
    out.set_item("realizations", s.realizations)?;
    out.set_item("samples", s.samples)?;
    out.set_item("means", s.means)?;
    out.set_item("std_devs", s.std_devs)?;
    let hist = PyDict::new(py);
    for (class, h) in &s.histograms {
        hist.set_item(class, h.bins().collect::<Vec<_>>())?;
    }
    out.set_item("histograms", hist)?;
    let corr = PyDict::new(py);
    for (label, c) in s.correlations {
        corr.set_item(label, c)?;
    }
    out.set_item("correlations", corr)?;
    Ok(out)
}

/// Parses a TOML run configuration and returns it normalized, with every
/// default filled in.
#[pyfunction]
fn normalize_config(text: &str) -> PyResult<String> {
    RunConfig::from_toml_str(text)
        .map(|c| c.to_toml_string())
        .map_err(to_py)
}

#[pymodule]
pub fn kinex(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyClassSystem>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_function(wrap_pyfunction!(transition_probability, m)?)?;
    m.add_function(wrap_pyfunction!(additive_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(multiplicative_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(conserving_additive_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(total_income, m)?)?;
    m.add_function(wrap_pyfunction!(gini, m)?)?;
    m.add_function(wrap_pyfunction!(mobility, m)?)?;
    m.add_function(wrap_pyfunction!(pearson, m)?)?;
    m.add_function(wrap_pyfunction!(histogram, m)?)?;
    m.add_function(wrap_pyfunction!(find_equilibrium, m)?)?;
    m.add_function(wrap_pyfunction!(run_trajectory, m)?)?;
    m.add_function(wrap_pyfunction!(run_ensemble, m)?)?;
    m.add_function(wrap_pyfunction!(summarize, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_config, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
