use nalgebra::DVector;

use super::{certificate, objective, objective_from_product, QpProblem, QpSolution, SolverOptions};
use crate::error::{Error, Result};
use crate::linalg;

/// Which case of the update fired for a coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    /// `r1 > v0`: the new value lies above the anchor.
    Above,
    /// `r2 < v0`: the new value lies below the anchor.
    Below,
    /// Neither; the coordinate moves onto the anchor `v0`.
    Anchor,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoordinateStep {
    pub r1: f64,
    pub r2: f64,
    pub branch: Branch,
    pub value: f64,
}

/// Positive root of `a x^2 + beta x - c = 0`, scaled by `v`.
///
/// When `a = 0` the quadratic degenerates: the root is `c / beta` for
/// `beta > 0` and `+inf` when no positive root exists. The fully
/// indeterminate case `a = c = beta = 0` keeps `v`.
fn scaled_root(a: f64, c: f64, beta: f64, v: f64) -> f64 {
    if v == 0.0 {
        return 0.0;
    }
    if a > 0.0 {
        let sq = (beta * beta + 4.0 * a * c).sqrt();
        // pick the cancellation-free form of the same root
        let factor = if beta > 0.0 { 2.0 * c / (beta + sq) } else { (sq - beta) / (2.0 * a) };
        v * factor
    } else if beta > 0.0 {
        v * c / beta
    } else if beta < 0.0 || c > 0.0 {
        f64::INFINITY
    } else {
        v
    }
}

/// One coordinate of the multiplicative update given `a_i = (A+ v)_i` and
/// `c_i = (A- v)_i`.
pub fn coordinate_step(a: f64, c: f64, b: f64, d: f64, v0: f64, l: f64, v: f64) -> CoordinateStep {
    let r1 = scaled_root(a, c, b + d, v);
    let r2 = scaled_root(a, c, b - d, v);
    let (branch, value) = if r1 > v0 {
        (Branch::Above, r1.min(l))
    } else if r2 < v0 {
        (Branch::Below, r2.min(l))
    } else {
        (Branch::Anchor, v0.min(l))
    };
    CoordinateStep { r1, r2, branch, value }
}

fn apply_update(problem: &QpProblem, v: &DVector<f64>, a: &DVector<f64>, c: &DVector<f64>, floor: f64) -> Result<DVector<f64>> {
    let mut next = DVector::zeros(v.len());
    for i in 0..v.len() {
        let step = coordinate_step(a[i], c[i], problem.b[i], problem.d[i], problem.v0[i], problem.l[i], v[i]);
        if step.r1.is_nan() || step.r2.is_nan() {
            return Err(Error::NonFinite { index: i, what: "update root" });
        }
        if !step.value.is_finite() {
            return Err(Error::NonFinite { index: i, what: "updated iterate" });
        }
        next[i] = if step.value < floor { 0.0 } else { step.value };
    }
    Ok(next)
}

/// One multiplicative update `v -> U(v)`. `v` must lie in `[0, l]`.
pub fn mu_update(problem: &QpProblem, v: &DVector<f64>) -> Result<DVector<f64>> {
    problem.check_point(v, "update point")?;
    for i in 0..v.len() {
        if v[i] < 0.0 || v[i] > problem.l[i] {
            return Err(Error::invalid(format!("update point outside [0, l] at coordinate {i}")));
        }
    }
    let (a, c) = problem.split_products(v);
    apply_update(problem, v, &a, &c, 0.0)
}

/// Runs the iteration from `options.init` until the relative sup-norm change
/// drops to `options.tol` (with the KKT residual under `options.kkt_guard`,
/// if set) or `options.max_iter` updates have been made.
///
/// Hitting the iteration cap is not an error: the last iterate is returned
/// with `converged = false`.
pub fn solve_qp(problem: &QpProblem, options: &SolverOptions) -> Result<QpSolution> {
    solve_qp_observed(problem, options, |_, _| {})
}

/// [`solve_qp`] with a callback receiving `(iteration, iterate)` after every
/// update.
pub fn solve_qp_observed<O>(problem: &QpProblem, options: &SolverOptions, mut observer: O) -> Result<QpSolution>
where
    O: FnMut(usize, &DVector<f64>),
{
    options.validate()?;
    let mut v = options.initial_point(problem)?;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let guard = options.kkt_guard.map(|g| g * (1.0 + linalg::inf_norm(problem.b())));

    while iterations < options.max_iter {
        let (a, c) = problem.split_products(&v);
        if options.record_trace {
            trace.push(objective_from_product(problem, &v, &(&a - &c)));
        }
        let next = apply_update(problem, &v, &a, &c, options.epsilon_floor)?;
        let change = (&next - &v).amax();
        let scale = linalg::inf_norm(&v).max(linalg::inf_norm(&next));
        v = next;
        iterations += 1;
        observer(iterations, &v);
        if change <= options.tol * scale {
            let certified = match guard {
                Some(limit) => certificate::kkt_residual(problem, &v)? <= limit,
                None => true,
            };
            if certified {
                converged = true;
                break;
            }
        }
    }

    let objective = objective(problem, &v)?;
    if options.record_trace {
        trace.push(objective);
    }
    let kkt_residual = certificate::kkt_residual(problem, &v)?;
    Ok(QpSolution { v, objective, iterations, kkt_residual, converged, objective_trace: trace })
}
