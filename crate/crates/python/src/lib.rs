//! Python module `argen`: the QP solver, the estimator and a few tracking
//! helpers. Matrices travel as lists of rows, vectors as lists of floats.

use argen::model::{self, ArgenConfig, Dataset, Preset};
use argen::qp::{self, QpProblem, SolverOptions};
use argen::{sim, tracking, tuning};
use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: argen::Error) -> PyErr {
    use argen::Error as E;
    match e {
        E::Io(_) | E::Csv(_) | E::Data(_) | E::InsufficientData(_) => PyIOError::new_err(e.to_string()),
        E::NonFinite { .. } | E::LogDomain { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != p) {
        return Err(PyValueError::new_err("ragged matrix rows"));
    }
    Ok(DMatrix::from_fn(n, p, |i, j| rows[i][j]))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn options(tol: f64, max_iter: usize) -> PyResult<SolverOptions> {
    let o = SolverOptions::default().with_tol(tol).with_max_iter(max_iter);
    o.validate().map_err(to_py)?;
    Ok(o)
}

/// Box-constrained QP `1/2 v'Av + b'v + d'|v - v0|` over `0 <= v <= l`.
#[pyclass(name = "QpProblem", module = "argen", skip_from_py_object)]
#[derive(Clone)]
pub struct PyQpProblem {
    inner: QpProblem,
}

#[pymethods]
impl PyQpProblem {
    #[new]
    fn py_new(a: Vec<Vec<f64>>, b: Vec<f64>, d: Vec<f64>, v0: Vec<f64>, l: Vec<f64>) -> PyResult<Self> {
        let inner = QpProblem::new(matrix(&a)?, DVector::from_vec(b), DVector::from_vec(d), DVector::from_vec(v0), DVector::from_vec(l))
            .map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: qp::QpProblemJson::parse(text).map_err(to_py)? })
    }

    /// Random test problem with a Gram-matrix `A`.
    #[staticmethod]
    #[pyo3(signature = (seed, dim, finite_l=false))]
    fn random(seed: u64, dim: usize, finite_l: bool) -> PyResult<Self> {
        Ok(Self { inner: sim::random_qp(seed, dim, finite_l).map_err(to_py)? })
    }

    fn to_json(&self) -> PyResult<String> {
        argen::json::to_string(&qp::QpProblemJson::from_problem(&self.inner)).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn objective(&self, v: Vec<f64>) -> PyResult<f64> {
        qp::objective(&self.inner, &DVector::from_vec(v)).map_err(to_py)
    }

    fn kkt_residual(&self, v: Vec<f64>) -> PyResult<f64> {
        qp::kkt_residual(&self.inner, &DVector::from_vec(v)).map_err(to_py)
    }

    /// One multiplicative update.
    fn mu_update(&self, v: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(qp::mu_update(&self.inner, &DVector::from_vec(v)).map_err(to_py)?.as_slice().to_vec())
    }

    /// Returns a dict with `v`, `objective`, `iterations`, `kkt_residual`,
    /// `converged` and `objective_trace` (empty unless `trace`).
    #[pyo3(signature = (tol=1e-10, max_iter=200_000, trace=false))]
    fn solve<'py>(&self, py: Python<'py>, tol: f64, max_iter: usize, trace: bool) -> PyResult<Bound<'py, PyDict>> {
        let sol = qp::solve_qp(&self.inner, &options(tol, max_iter)?.with_trace(trace)).map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("v", sol.v.as_slice().to_vec())?;
        d.set_item("objective", sol.objective)?;
        d.set_item("iterations", sol.iterations)?;
        d.set_item("kkt_residual", sol.kkt_residual)?;
        d.set_item("converged", sol.converged)?;
        d.set_item("objective_trace", sol.objective_trace)?;
        Ok(d)
    }
}

/// Estimator configuration: `lambda1`, `lambda2`, weights `w`, `sigma` and
/// the box `[s, t]`.
#[pyclass(name = "Config", module = "argen", skip_from_py_object)]
#[derive(Clone)]
pub struct PyConfig {
    inner: ArgenConfig,
}

#[pymethods]
impl PyConfig {
    /// Preset with neutral values for its free hyperparameters.
    #[staticmethod]
    fn preset(name: &str, s: Vec<f64>, t: Vec<f64>) -> PyResult<Self> {
        let p: Preset = name.parse().map_err(to_py)?;
        Ok(Self { inner: model::make_preset(p, s, t).map_err(to_py)?.config })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: ArgenConfig::from_json(text).map_err(to_py)? })
    }

    fn to_json(&self) -> PyResult<String> {
        argen::json::to_string(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[getter]
    fn get_lambda1(&self) -> f64 {
        self.inner.lambda1
    }
    #[setter]
    fn set_lambda1(&mut self, v: f64) {
        self.inner.lambda1 = v;
    }
    #[getter]
    fn get_lambda2(&self) -> f64 {
        self.inner.lambda2
    }
    #[setter]
    fn set_lambda2(&mut self, v: f64) {
        self.inner.lambda2 = v;
    }
    #[getter]
    fn get_w(&self) -> Vec<f64> {
        self.inner.w.clone()
    }
    #[setter]
    fn set_w(&mut self, w: Vec<f64>) {
        self.inner.w = w;
    }
    #[getter]
    fn s(&self) -> Vec<f64> {
        self.inner.s.clone()
    }
    #[getter]
    fn t(&self) -> Vec<f64> {
        self.inner.t.clone()
    }

    fn __repr__(&self) -> String {
        format!("Config(lambda1={}, lambda2={}, p={})", self.inner.lambda1, self.inner.lambda2, self.inner.dim())
    }
}

#[pyclass(name = "FittedModel", module = "argen")]
pub struct PyFitted {
    inner: model::FittedModel,
}

#[pymethods]
impl PyFitted {
    #[getter]
    fn beta(&self) -> Vec<f64> {
        self.inner.beta.clone()
    }
    #[getter]
    fn n_nonzero(&self) -> usize {
        self.inner.n_nonzero
    }
    #[getter]
    fn converged(&self) -> bool {
        self.inner.diagnostics.converged
    }
    #[getter]
    fn iterations(&self) -> usize {
        self.inner.diagnostics.iterations
    }
    #[getter]
    fn kkt_residual(&self) -> f64 {
        self.inner.diagnostics.kkt_residual
    }
    #[getter]
    fn config(&self) -> PyConfig {
        PyConfig { inner: self.inner.config.clone() }
    }

    fn predict(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        Ok(model::predict(&self.inner, &matrix(&x)?).map_err(to_py)?.as_slice().to_vec())
    }

    fn __repr__(&self) -> String {
        format!("FittedModel(n_nonzero={}, converged={})", self.inner.n_nonzero, self.inner.diagnostics.converged)
    }
}

/// Fits `config` on `(x, y)`.
#[pyfunction]
#[pyo3(signature = (x, y, config, tol=1e-10, max_iter=200_000))]
fn fit(x: Vec<Vec<f64>>, y: Vec<f64>, config: &PyConfig, tol: f64, max_iter: usize) -> PyResult<PyFitted> {
    let data = Dataset::train_only(matrix(&x)?, DVector::from_vec(y)).map_err(to_py)?;
    let inner = model::fit(&data, &config.inner, &options(tol, max_iter)?).map_err(to_py)?;
    Ok(PyFitted { inner })
}

/// `lambda1` giving `target` nonzero coefficients; returns
/// `(lambda1, achieved, beta)`.
#[pyfunction]
#[pyo3(signature = (x, y, config, target, tol=1e-10))]
fn bisection_lambda1(x: Vec<Vec<f64>>, y: Vec<f64>, config: &PyConfig, target: usize, tol: f64) -> PyResult<(f64, usize, Vec<f64>)> {
    let r = tuning::bisection_lambda1_xy(
        &matrix(&x)?,
        &DVector::from_vec(y),
        &config.inner,
        target,
        &options(tol, 200_000)?,
        &tuning::BisectionSettings::default(),
    )
    .map_err(to_py)?;
    Ok((r.lambda1, r.achieved, r.beta))
}

type ExampleData = (Vec<Vec<f64>>, Vec<f64>, Vec<String>, Vec<f64>);

/// Simulated example `k`: `(x, y, split labels, beta_star)`.
#[pyfunction]
fn gen_example(k: u8, seed: u64) -> PyResult<ExampleData> {
    let (data, scn) = sim::gen_example(k, seed).map_err(to_py)?;
    let split = data.split().iter().map(|s| s.to_string()).collect();
    Ok((rows(data.x()), data.y().as_slice().to_vec(), split, scn.beta_star))
}

/// `(TE, ARV, CR)` of portfolio returns against benchmark returns.
#[pyfunction]
fn track_metrics(portfolio: Vec<f64>, benchmark: Vec<f64>) -> PyResult<(f64, f64, f64)> {
    let m = tracking::track_metrics(&portfolio, &benchmark).map_err(to_py)?;
    Ok((m.te, m.arv, m.cr))
}

#[pyfunction]
fn normalize_weights(beta: Vec<f64>) -> PyResult<Vec<f64>> {
    tracking::normalize_weights(&beta).map_err(to_py)
}

/// `(feasible, violating indices)`.
#[pyfunction]
fn check_bound_feasibility(s: Vec<f64>, t: Vec<f64>) -> (bool, Vec<usize>) {
    let r = tracking::check_bound_feasibility(&s, &t);
    (r.feasible, r.violating)
}

#[pymodule]
#[pyo3(name = "argen")]
fn argen_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyQpProblem>()?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyFitted>()?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(bisection_lambda1, m)?)?;
    m.add_function(wrap_pyfunction!(gen_example, m)?)?;
    m.add_function(wrap_pyfunction!(track_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_weights, m)?)?;
    m.add_function(wrap_pyfunction!(check_bound_feasibility, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn module_round_trip() {
        Python::initialize();
        Python::attach(|py| {
            let m = PyModule::new(py, "argen").unwrap();
            argen_module(&m).unwrap();
            let locals = PyDict::new(py);
            locals.set_item("argen", &m).unwrap();
            py.run(
                c"
p = argen.QpProblem([[2.0]], [-2.0], [0.0], [0.0], [10.0])
sol = p.solve()
assert abs(sol['v'][0] - 1.0) < 1e-8, sol
cfg = argen.Config.preset('ARLS', [-10.0, -10.0], [10.0, 10.0])
m = argen.fit([[1, 0], [0, 1], [1, 0], [0, 1]], [1, 2, 1, 2], cfg)
assert abs(m.beta[0] - 1) < 1e-6 and abs(m.beta[1] - 2) < 1e-6
try:
    argen.Config.preset('NOPE', [0.0], [1.0])
    raise SystemExit('expected ValueError')
except ValueError:
    pass
",
                None,
                Some(&locals),
            )
            .unwrap();
        });
    }
}
