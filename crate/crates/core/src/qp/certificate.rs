use nalgebra::DVector;

use super::QpProblem;
use crate::error::{Error, Result};
use crate::linalg;

/// Coordinates within `KKT_ACTIVITY_TOL * (1 + |v|_inf)` of a breakpoint
/// (`0`, `l_i` or `v0_i`) are also tested as if they sat on it.
pub const KKT_ACTIVITY_TOL: f64 = 1e-6;

/// Distance from zero to `g + d * dsign + N` where `x` is the position
/// being tested.
fn coordinate_residual(g: f64, d: f64, v0: f64, l: f64, x: f64) -> f64 {
    let (mut lo, mut hi) = if x > v0 {
        (g + d, g + d)
    } else if x < v0 {
        (g - d, g - d)
    } else {
        (g - d, g + d)
    };
    if x <= 0.0 {
        lo = f64::NEG_INFINITY;
    }
    if x >= l {
        hi = f64::INFINITY;
    }
    if lo <= 0.0 && 0.0 <= hi {
        0.0
    } else {
        lo.abs().min(hi.abs())
    }
}

/// Sup-norm of the minimum-norm element of `dF(v) + N_[0,l](v)`, using the
/// default activity tolerance. Zero certifies optimality.
pub fn kkt_residual(problem: &QpProblem, v: &DVector<f64>) -> Result<f64> {
    let tol = KKT_ACTIVITY_TOL * (1.0 + linalg::inf_norm(v));
    kkt_residual_with_tolerance(problem, v, tol)
}

/// As [`kkt_residual`] with an explicit absolute activity tolerance; `0.0`
/// gives the exact subdifferential test.
pub fn kkt_residual_with_tolerance(problem: &QpProblem, v: &DVector<f64>, activity_tol: f64) -> Result<f64> {
    problem.check_point(v, "KKT point")?;
    let g = problem.a().tr_mul(v) + problem.b();
    Ok(residual_at(problem, v, &g, activity_tol))
}

fn residual_at(problem: &QpProblem, v: &DVector<f64>, g: &DVector<f64>, activity_tol: f64) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..v.len() {
        let (d, v0, l, x) = (problem.d()[i], problem.v0()[i], problem.l()[i], v[i]);
        let mut r = coordinate_residual(g[i], d, v0, l, x);
        if x != 0.0 && x <= activity_tol {
            r = r.min(coordinate_residual(g[i], d, v0, l, 0.0));
        }
        if x != l && l.is_finite() && l - x <= activity_tol {
            r = r.min(coordinate_residual(g[i], d, v0, l, l));
        }
        if x != v0 && v0 <= l && (x - v0).abs() <= activity_tol {
            r = r.min(coordinate_residual(g[i], d, v0, l, v0));
        }
        worst = worst.max(r);
    }
    worst
}

/// The auxiliary function
///
/// ```text
/// G(u, v) = 1/2 sum_ij [ A+_ij u_i^2 v_j / v_i - A-_ij v_i v_j (1 + ln(u_i u_j / (v_i v_j))) ]
///           + sum_i [ b_i u_i + d_i |u_i - v0_i| ]
/// ```
///
/// which satisfies `G(v, v) = F(v)` and `G(u, v) >= F(u)`. Requires `v_i > 0`
/// on every coordinate with a nonzero row of `A`, and `u_i > 0` wherever the
/// row of `A-` is nonzero.
pub fn auxiliary_g(problem: &QpProblem, u: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
    problem.check_point(u, "auxiliary u")?;
    problem.check_point(v, "auxiliary v")?;
    let (ap, am) = problem.split();
    let p = problem.dim();
    for i in 0..p {
        let plus_row = (0..p).any(|j| ap[(i, j)] != 0.0);
        let minus_row = (0..p).any(|j| am[(i, j)] != 0.0);
        if (plus_row || minus_row) && !(v[i] > 0.0) {
            return Err(Error::LogDomain { index: i });
        }
        if minus_row && !(u[i] > 0.0) {
            return Err(Error::LogDomain { index: i });
        }
    }
    let mut terms = Vec::with_capacity(p * p + p);
    for i in 0..p {
        for j in 0..p {
            let plus = ap[(i, j)];
            if plus != 0.0 {
                terms.push(0.5 * plus * u[i] * u[i] * v[j] / v[i]);
            }
            let minus = am[(i, j)];
            if minus != 0.0 {
                let vv = v[i] * v[j];
                let ratio = (u[i] / v[i]).ln() + (u[j] / v[j]).ln();
                terms.push(-0.5 * minus * vv * (1.0 + ratio));
            }
        }
        terms.push(problem.b()[i] * u[i] + problem.d()[i] * (u[i] - problem.v0()[i]).abs());
    }
    Ok(linalg::neumaier_sum(terms))
}
