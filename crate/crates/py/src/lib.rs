//! Python bindings: `Problem`, `Solution`, `solve`, `simulate`, `verify`.
//!
//! Matrices cross the boundary as lists of rows, vectors as lists.

use jumplq::error::Error;
use jumplq::io::{load_spec, load_spec_str, save_spec};
use jumplq::noise::NoisePlan;
use jumplq::riccati::Tolerances;
use jumplq::sim::Simulator;
use jumplq::verify::{cost_along, run_suite, CostReport, SuiteConfig};
use jumplq::{fixtures, Matrix, ProblemSpec, ValidatedProblem, Vector};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyIndexError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(jumplq, JumpLqError, PyException);
create_exception!(jumplq, ValidationError, JumpLqError);
create_exception!(jumplq, ParseError, JumpLqError);
create_exception!(jumplq, ClosedLoopUnsolvable, JumpLqError);
create_exception!(jumplq, NumericalError, JumpLqError);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Validation(_) | Error::Dimension(_) | Error::OutOfHorizon { .. } => ValidationError::new_err(e.to_string()),
        Error::Parse(_) | Error::Schema(_) | Error::Io(_) => ParseError::new_err(e.to_string()),
        Error::ClosedLoopUnsolvable { time, reason } | Error::RegularityViolation { time, which: reason } => {
            ClosedLoopUnsolvable::new_err((time, reason.to_string()))
        }
        Error::NumericalFailure(_) | Error::StateBlowUp { .. } => NumericalError::new_err(e.to_string()),
    }
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn vector(v: Vec<f64>, n: usize, what: &str) -> PyResult<Vector> {
    if v.len() != n {
        return Err(ValidationError::new_err(format!("{what} has length {}, expected {n}", v.len())));
    }
    Ok(Vector::from_vec(v))
}

/// A validated problem.
#[pyclass(module = "jumplq", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct Problem(ValidatedProblem);

fn validated(spec: ProblemSpec) -> PyResult<Problem> {
    spec.validate().map(Problem).map_err(|v| to_py(Error::Validation(v)))
}

#[pymethods]
impl Problem {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        validated(load_spec_str(text).map_err(to_py)?)
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        validated(load_spec(path).map_err(to_py)?)
    }

    /// Reference problems: `riccati_quadratic`, `pure_jump`, `jump_control`,
    /// `inhomogeneous_scalar`, `negative_control_weight`.
    #[staticmethod]
    #[pyo3(signature = (name, steps = 1000))]
    fn fixture(name: &str, steps: usize) -> PyResult<Self> {
        let spec = match name {
            "riccati_quadratic" => fixtures::riccati_quadratic(steps),
            "pure_jump" => fixtures::pure_jump(steps),
            "jump_control" => fixtures::jump_control(steps),
            "inhomogeneous_scalar" => fixtures::inhomogeneous_scalar(steps),
            "negative_control_weight" => fixtures::negative_control_weight(steps),
            _ => return Err(PyValueError::new_err(format!("unknown fixture `{name}`"))),
        };
        validated(spec)
    }

    fn to_json(&self) -> PyResult<String> {
        save_spec(self.0.spec()).map_err(to_py)
    }

    /// Same problem on a grid with `steps` steps.
    fn regrid(&self, steps: usize) -> PyResult<Self> {
        self.0.regrid(steps).map(Problem).map_err(to_py)
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n
    }

    #[getter]
    fn m(&self) -> usize {
        self.0.m
    }

    #[getter]
    fn marks(&self) -> usize {
        self.0.marks()
    }

    #[getter]
    fn steps(&self) -> usize {
        self.0.grid().steps
    }

    #[getter]
    fn t0(&self) -> f64 {
        self.0.grid().t0
    }

    #[getter(T)]
    fn t_end(&self) -> f64 {
        self.0.grid().t_end
    }

    #[getter]
    fn x0(&self) -> Vec<f64> {
        self.0.x0.iter().copied().collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Problem(n={}, m={}, marks={}, steps={})",
            self.0.n,
            self.0.m,
            self.0.marks(),
            self.0.grid().steps
        )
    }
}

/// Optimal closed-loop strategy with the Riccati and adjoint solutions.
#[pyclass(module = "jumplq", frozen)]
pub struct Solution {
    problem: ValidatedProblem,
    inner: jumplq::Solution,
}

impl Solution {
    fn check(&self, k: usize) -> PyResult<()> {
        if k > self.problem.grid().steps {
            return Err(PyIndexError::new_err(format!("grid index {k} > {}", self.problem.grid().steps)));
        }
        Ok(())
    }
}

#[pymethods]
impl Solution {
    /// `P(t_k)`.
    #[allow(non_snake_case)]
    fn P(&self, k: usize) -> PyResult<Vec<Vec<f64>>> {
        self.check(k)?;
        Ok(rows(&self.inner.ride.p[k]))
    }

    fn theta(&self, k: usize) -> PyResult<Vec<Vec<f64>>> {
        self.check(k)?;
        Ok(rows(&self.inner.strategy.theta[k]))
    }

    fn v(&self, k: usize) -> PyResult<Vec<f64>> {
        self.check(k)?;
        Ok(self.inner.strategy.v[k].iter().copied().collect())
    }

    fn eta(&self, k: usize) -> PyResult<Vec<f64>> {
        self.check(k)?;
        Ok(self.inner.adjoint.eta[k].iter().copied().collect())
    }

    /// Grid times.
    fn times(&self) -> Vec<f64> {
        self.problem.grid().points().collect()
    }

    #[getter]
    fn theta_l2_norm(&self) -> f64 {
        self.inner.ride.theta_l2_norm
    }

    /// `V(t, x)` at a grid time (default `t0`, `x0`) with its decomposition.
    #[pyo3(signature = (x = None, t = None))]
    fn value<'py>(&self, py: Python<'py>, x: Option<Vec<f64>>, t: Option<f64>) -> PyResult<Bound<'py, PyDict>> {
        let x = match x {
            Some(v) => vector(v, self.problem.n, "x")?,
            None => self.problem.x0.clone(),
        };
        let v = self
            .inner
            .value(&self.problem, t.unwrap_or(self.problem.grid().t0), &x)
            .map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("value", v.value)?;
        d.set_item("quadratic", v.quadratic)?;
        d.set_item("linear", v.linear)?;
        d.set_item("integral", v.integral)?;
        Ok(d)
    }
}

#[pyfunction]
#[pyo3(signature = (problem, tol_psd = Tolerances::default().psd, tol_range = Tolerances::default().range))]
fn solve(py: Python<'_>, problem: &Problem, tol_psd: f64, tol_range: f64) -> PyResult<Solution> {
    let tol = Tolerances {
        psd: tol_psd,
        range: tol_range,
    };
    let prob = problem.0.clone();
    let inner = py.detach(|| jumplq::solve(&prob, &tol)).map_err(to_py)?;
    Ok(Solution { problem: prob, inner })
}

/// Closed-loop Monte Carlo: mean cost, its standard error and per-path costs.
#[pyfunction]
#[pyo3(signature = (solution, seed = 0, paths = 10_000, x0 = None))]
fn simulate<'py>(
    py: Python<'py>,
    solution: &Solution,
    seed: u64,
    paths: usize,
    x0: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyDict>> {
    let prob = &solution.problem;
    let x = match x0 {
        Some(v) => vector(v, prob.n, "x0")?,
        None => prob.x0.clone(),
    };
    let plan = NoisePlan::new(seed, paths.max(1));
    let costs = py
        .detach(|| Simulator::new(prob).map_paths(&solution.inner.strategy, &plan, &x, |tr| Ok(cost_along(&tr, prob))))
        .map_err(to_py)?;
    let rep = CostReport::from_samples(&costs, false);
    let d = PyDict::new(py);
    d.set_item("mean", rep.mean)?;
    d.set_item("std_error", rep.std_error)?;
    d.set_item("paths", rep.paths)?;
    d.set_item("costs", costs)?;
    Ok(d)
}

/// Verification suite; a list of `{name, lhs, rhs, gap, tolerance, pass}`.
#[pyfunction]
#[pyo3(signature = (solution, seed = 0, paths = 10_000))]
fn verify<'py>(py: Python<'py>, solution: &Solution, seed: u64, paths: usize) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg = SuiteConfig {
        seed,
        paths: paths.max(1),
        ..SuiteConfig::default()
    };
    let report = py
        .detach(|| run_suite(&solution.problem, &solution.inner, &cfg))
        .map_err(to_py)?;
    report
        .checks
        .iter()
        .map(|c| {
            let d = PyDict::new(py);
            d.set_item("name", &c.name)?;
            d.set_item("lhs", c.lhs)?;
            d.set_item("rhs", c.rhs)?;
            d.set_item("gap", c.gap)?;
            d.set_item("tolerance", c.tolerance)?;
            d.set_item("pass", c.pass)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
#[pyo3(name = "jumplq")]
fn jumplq_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add_class::<Problem>()?;
    m.add_class::<Solution>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add("JumpLqError", py.get_type::<JumpLqError>())?;
    m.add("ValidationError", py.get_type::<ValidationError>())?;
    m.add("ParseError", py.get_type::<ParseError>())?;
    m.add("ClosedLoopUnsolvable", py.get_type::<ClosedLoopUnsolvable>())?;
    m.add("NumericalError", py.get_type::<NumericalError>())?;
    Ok(())
}
