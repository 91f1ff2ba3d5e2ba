//! Calls the bindings through an embedded interpreter.

use pyo3::prelude::*;
use pyo3::types::{PyDict, PyModule};

fn with_module<F: FnOnce(&Bound<'_, PyModule>)>(f: F) {
    Python::initialize();
    Python::attach(|py| {
        let m = PyModule::new(py, "dpopt_py").unwrap();
        dpopt_py::dpopt_py(&m).unwrap();
        f(&m);
    });
}

#[test]
fn calibrate_and_factors() {
    with_module(|m| {
        let kwargs = PyDict::new(m.py());
        kwargs.set_item("accountant", "numeric").unwrap();
        let (sigma, eps, _order): (f64, f64, f64) = m
            .getattr("calibrate")
            .unwrap()
            .call((8.0, 1e-5, 50_000u64, 1_000u64, 5_000u64), Some(&kwargs))
            .unwrap()
            .extract()
            .unwrap();
        assert!((1.08..=1.32).contains(&sigma));
        assert!(eps <= 8.0);
        let h: f64 = m
            .getattr("clip_factor")
            .unwrap()
            .call1((4.0, 1.0))
            .unwrap()
            .extract()
            .unwrap();
        assert_eq!(h, 0.25);
    });
}

#[test]
fn errors_become_value_errors() {
    with_module(|m| {
        let err = m
            .getattr("calibrate")
            .unwrap()
            .call1((8.0, 1e-5, 1_000u64, 100u64, 10u64))
            .unwrap_err();
        assert!(err.is_instance_of::<pyo3::exceptions::PyValueError>(m.py()));
        let bad = m
            .getattr("run")
            .unwrap()
            .call1(("optimizer.kind = adam",))
            .unwrap_err();
        assert!(bad.is_instance_of::<pyo3::exceptions::PyValueError>(m.py()));
    });
}

#[test]
fn run_returns_records() {
    with_module(|m| {
        let out = m
            .getattr("run")
            .unwrap()
            .call1(("run.steps = 100\nrun.eval_every = 10",))
            .unwrap();
        let d = out.cast::<PyDict>().unwrap();
        let records: Vec<(u64, f64, f64, f64)> =
            d.get_item("records").unwrap().unwrap().extract().unwrap();
        assert_eq!(records.first().unwrap().0, 0);
        assert!(records.windows(2).all(|w| w[1].3 <= w[0].3));
    });
}
