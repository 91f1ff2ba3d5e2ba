//! Python bindings for `dpopt`.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use dpopt::accountant::{self, Accountant, AccountantConfig, PrivacyBudget};
use dpopt::bias_lab::{self, ToyParams};
use dpopt::harness::{self, ConfigFile};
use dpopt::{optimizer, Error};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(_) | Error::Csv(_) | Error::QuadratureNonConvergence { .. } => {
            PyRuntimeError::new_err(e.to_string())
        }
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse_accountant(name: &str) -> PyResult<Accountant> {
    name.parse().map_err(to_py)
}

/// Noise multiplier for an (eps, delta) budget. Returns `(sigma, eps, order)`.
#[pyfunction]
#[pyo3(signature = (eps, delta, n, b, t, accountant = "closed"))]
fn calibrate(
    eps: f64,
    delta: f64,
    n: u64,
    b: u64,
    t: u64,
    accountant: &str,
) -> PyResult<(f64, f64, f64)> {
    let acc = parse_accountant(accountant)?;
    let budget = PrivacyBudget::new(eps, delta).map_err(to_py)?;
    let cfg = AccountantConfig::new(n, b, t).map_err(to_py)?;
    let c = accountant::calibrate(acc, &budget, &cfg).map_err(to_py)?;
    Ok((c.sigma, c.eps, c.order))
}

/// Privacy loss of `t` steps at noise multiplier `sigma`. Returns `(eps, order)`.
#[pyfunction]
#[pyo3(signature = (sigma, delta, n, b, t, accountant = "closed"))]
fn epsilon(
    sigma: f64,
    delta: f64,
    n: u64,
    b: u64,
    t: u64,
    accountant: &str,
) -> PyResult<(f64, Option<f64>)> {
    let acc = parse_accountant(accountant)?;
    let cfg = AccountantConfig::new(n, b, t).map_err(to_py)?;
    let e = accountant::epsilon(acc, sigma, &cfg, delta).map_err(to_py)?;
    Ok((e.eps, e.order))
}

/// Per-step Poisson-subsampled Gaussian RDP at an integer order.
#[pyfunction]
fn numeric_poisson_rdp(order: u32, sigma: f64, gamma: f64) -> PyResult<f64> {
    accountant::numeric_poisson_rdp(order, sigma, gamma).map_err(to_py)
}

/// Per-step closed-form subsampled RDP bound.
#[pyfunction]
fn subsampled_rdp_bound(order: f64, sigma: f64, gamma: f64) -> PyResult<f64> {
    accountant::subsampled_rdp_bound(order, sigma, gamma).map_err(to_py)
}

#[pyfunction]
fn normalize_factor(g_norm: f64, r: f64) -> f64 {
    optimizer::normalize_factor(g_norm, r)
}

#[pyfunction]
fn clip_factor(g_norm: f64, c: f64) -> f64 {
    optimizer::clip_factor(g_norm, c)
}

/// Closed form of the toy expected first-order term.
#[pyfunction]
fn toy_closed_form(tau0: f64, r: f64, eta: f64, s: f64) -> PyResult<f64> {
    let p = ToyParams::new(tau0, r, eta, s).map_err(to_py)?;
    bias_lab::toy_a_closed_form(&p).map_err(to_py)
}

/// Exact two-atom expectation of the toy first-order term.
#[pyfunction]
fn toy_exact(tau0: f64, r: f64, eta: f64, s: f64) -> PyResult<f64> {
    let p = ToyParams::new(tau0, r, eta, s).map_err(to_py)?;
    bias_lab::toy_a_exact(&p).map_err(to_py)
}

/// Log-log slope through `(T, value)` pairs.
#[pyfunction]
fn rate_fit(points: Vec<(f64, f64)>) -> PyResult<f64> {
    harness::rate_fit(&points).map_err(to_py)
}

/// Runs one trajectory from config text (`section.key = value` lines).
///
/// Returns a dict with `eta`, `min_grad_norm`, `diverged`, `final_x` and
/// `records` (a list of `(step, loss, grad_norm, min_grad_norm)` tuples).
#[pyfunction]
#[pyo3(signature = (config = "", seed = None))]
fn run<'py>(py: Python<'py>, config: &str, seed: Option<u64>) -> PyResult<Bound<'py, PyDict>> {
    let mut cf = ConfigFile::parse(config).map_err(to_py)?;
    if let Some(s) = seed {
        cf.set("run.seed", s.to_string()).map_err(to_py)?;
    }
    let cfg = cf.experiment().map_err(to_py)?;
    let t = py.detach(|| harness::run(&cfg)).map_err(to_py)?;
    let records: Vec<(u64, f64, f64, f64)> = t
        .records
        .iter()
        .map(|r| (r.step, r.loss, r.grad_norm, r.min_grad_norm))
        .collect();
    let d = PyDict::new(py);
    d.set_item("eta", t.eta)?;
    d.set_item("min_grad_norm", t.min_grad_norm)?;
    d.set_item("diverged", t.diverged)?;
    d.set_item("final_x", t.final_x)?;
    d.set_item("records", records)?;
    Ok(d)
}

#[pymodule]
pub fn dpopt_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    m.add_function(wrap_pyfunction!(epsilon, m)?)?;
    m.add_function(wrap_pyfunction!(numeric_poisson_rdp, m)?)?;
    m.add_function(wrap_pyfunction!(subsampled_rdp_bound, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_factor, m)?)?;
    m.add_function(wrap_pyfunction!(clip_factor, m)?)?;
    m.add_function(wrap_pyfunction!(toy_closed_form, m)?)?;
    m.add_function(wrap_pyfunction!(toy_exact, m)?)?;
    m.add_function(wrap_pyfunction!(rate_fit, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
