//! Box-constrained QP with an anchored weighted l1 term:
//!
//! ```text
//!     minimize   F(v) = 1/2 v'Av + b'v + d'|v - v0|
//!     subject to 0 <= v <= l
//! ```
//!
//! solved by a multiplicative-updates iteration. Each step minimizes a
//! separable auxiliary function that majorizes `F`, so the objective never
//! increases and iterates never leave the box.

mod certificate;
mod io;
mod update;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

pub use certificate::{auxiliary_g, kkt_residual, kkt_residual_with_tolerance, KKT_ACTIVITY_TOL};
pub use io::{QpProblemJson, QpSolutionJson};
pub use update::{coordinate_step, mu_update, solve_qp, solve_qp_observed, Branch, CoordinateStep};

/// Relative symmetry tolerance, scaled by `max |A_ij|`.
pub const SYM_TOL: f64 = 1e-10;

/// Validated problem data with `A` stored symmetrized.
#[derive(Clone, Debug)]
pub struct QpProblem {
    a: DMatrix<f64>,
    b: DVector<f64>,
    d: DVector<f64>,
    v0: DVector<f64>,
    l: DVector<f64>,
    psd_jitter: f64,
}

impl QpProblem {
    /// Builds a problem after checking every invariant, including positive
    /// semi-definiteness of `A` by jittered Cholesky factorization.
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, d: DVector<f64>, v0: DVector<f64>, l: DVector<f64>) -> Result<Self> {
        let a = Self::check_parts(a, &b, &d, &v0, &l)?;
        let psd_jitter = linalg::check_psd(&a)?;
        Ok(Self::assemble(a, b, d, v0, l, psd_jitter))
    }

    /// Same as [`QpProblem::new`] but skips the factorization. For callers
    /// whose `A` is positive semi-definite by construction (Gram matrix plus
    /// a validated PSD penalty).
    pub(crate) fn new_psd_by_construction(
        a: DMatrix<f64>,
        b: DVector<f64>,
        d: DVector<f64>,
        v0: DVector<f64>,
        l: DVector<f64>,
    ) -> Result<Self> {
        let a = Self::check_parts(a, &b, &d, &v0, &l)?;
        Ok(Self::assemble(a, b, d, v0, l, 0.0))
    }

    fn check_parts(mut a: DMatrix<f64>, b: &DVector<f64>, d: &DVector<f64>, v0: &DVector<f64>, l: &DVector<f64>) -> Result<DMatrix<f64>> {
        let p = a.nrows();
        if p == 0 {
            return Err(Error::invalid("problem dimension must be at least 1"));
        }
        Error::check_len("A columns", p, a.ncols())?;
        Error::check_len("b", p, b.len())?;
        Error::check_len("d", p, d.len())?;
        Error::check_len("v0", p, v0.len())?;
        Error::check_len("l", p, l.len())?;
        if a.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("A must be finite"));
        }
        if b.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("b must be finite"));
        }
        if let Some(i) = d.iter().position(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::invalid(format!("d must be finite and nonnegative (d[{i}] = {})", d[i])));
        }
        if let Some(i) = v0.iter().position(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::invalid(format!("v0 must be finite and nonnegative (v0[{i}] = {})", v0[i])));
        }
        if let Some(i) = l.iter().position(|&x| !(x > 0.0)) {
            return Err(Error::invalid(format!("l must be strictly positive (l[{i}] = {})", l[i])));
        }
        let scale = a.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        let asym = linalg::asymmetry(&a);
        if asym > SYM_TOL * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::invalid(format!("A is not symmetric (max asymmetry {asym:e})")));
        }
        if asym > 0.0 {
            linalg::symmetrize_in_place(&mut a);
        }
        Ok(a)
    }

    fn assemble(a: DMatrix<f64>, b: DVector<f64>, d: DVector<f64>, v0: DVector<f64>, l: DVector<f64>, psd_jitter: f64) -> Self {
        Self { a, b, d, v0, l, psd_jitter }
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    /// `(A+, A-)`, computed on demand.
    pub fn split(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        split_matrix(&self.a)
    }
    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }
    pub fn d(&self) -> &DVector<f64> {
        &self.d
    }
    pub fn v0(&self) -> &DVector<f64> {
        &self.v0
    }
    pub fn l(&self) -> &DVector<f64> {
        &self.l
    }
    /// Diagonal shift needed for the PSD factorization to succeed.
    pub fn psd_jitter(&self) -> f64 {
        self.psd_jitter
    }

    /// `(A+ v, A- v)` in a single pass over `A`. `A` is symmetric, so row
    /// `i` is the contiguous column `i`.
    pub(crate) fn split_products(&self, v: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let p = self.dim();
        let vs = v.as_slice();
        let mut pos = DVector::zeros(p);
        let mut neg = DVector::zeros(p);
        for i in 0..p {
            let (a, c) = split_dot(self.a.column(i).as_slice(), vs);
            pos[i] = a;
            neg[i] = c;
        }
        (pos, neg)
    }

    pub(crate) fn check_point(&self, v: &DVector<f64>, context: &'static str) -> Result<()> {
        Error::check_len(context, self.dim(), v.len())?;
        if let Some(i) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { index: i, what: context });
        }
        Ok(())
    }
}

/// Starting point of the iteration.
#[derive(Clone, Debug, PartialEq, Default)]
pub enum Init {
    /// Elementwise midpoint of `[tol, min(l_i, 1 + v0_i)]`.
    #[default]
    Midpoint,
    Vector(DVector<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    /// Stop once `|v_new - v|_inf <= tol * max(|v|_inf, |v_new|_inf)`.
    pub tol: f64,
    pub max_iter: usize,
    pub init: Init,
    /// Positive iterate entries below this value are set to zero.
    pub epsilon_floor: f64,
    /// Record `F` at every iterate in [`QpSolution::objective_trace`].
    pub record_trace: bool,
    /// When set, a small step only counts as convergence if the KKT residual
    /// is also at most `kkt_guard * (1 + |b|_inf)`; otherwise iteration goes
    /// on. A coordinate creeping away from zero moves by tiny absolute
    /// amounts and would fool the step test alone.
    pub kkt_guard: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 200_000, init: Init::Midpoint, epsilon_floor: 1e-300, record_trace: false, kkt_guard: Some(1e-6) }
    }
}

impl SolverOptions {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }
    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }
    pub fn with_trace(mut self, on: bool) -> Self {
        self.record_trace = on;
        self
    }
    pub fn with_kkt_guard(mut self, guard: Option<f64>) -> Self {
        self.kkt_guard = guard;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || !self.tol.is_finite() {
            return Err(Error::invalid(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be at least 1"));
        }
        if !(self.epsilon_floor >= 0.0) {
            return Err(Error::invalid("epsilon_floor must be nonnegative"));
        }
        if let Some(g) = self.kkt_guard {
            if !(g > 0.0) {
                return Err(Error::invalid(format!("kkt_guard must be positive, got {g}")));
            }
        }
        Ok(())
    }

    /// Resolves the starting vector for `problem`.
    pub fn initial_point(&self, problem: &QpProblem) -> Result<DVector<f64>> {
        match &self.init {
            Init::Midpoint => Ok(DVector::from_fn(problem.dim(), |i, _| {
                let hi = problem.l[i].min(1.0 + problem.v0[i]);
                (0.5 * (self.tol + hi)).min(problem.l[i])
            })),
            Init::Vector(v) => {
                Error::check_len("initial point", problem.dim(), v.len())?;
                for i in 0..v.len() {
                    if !(v[i] > 0.0 && v[i] <= problem.l[i]) || !v[i].is_finite() {
                        return Err(Error::invalid(format!(
                            "initial point must satisfy 0 < v <= l (v[{i}] = {}, l[{i}] = {})",
                            v[i], problem.l[i]
                        )));
                    }
                }
                Ok(v.clone())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpSolution {
    pub v: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub converged: bool,
    /// `F(v^(1)), F(v^(2)), ...` when tracing was requested; empty otherwise.
    pub objective_trace: Vec<f64>,
}

/// `(sum max(x,0) v, sum max(-x,0) v)` with eight independent lanes.
fn split_dot(col: &[f64], v: &[f64]) -> (f64, f64) {
    const LANES: usize = 8;
    let mut pos = [0.0_f64; LANES];
    let mut neg = [0.0_f64; LANES];
    let mut cc = col.chunks_exact(LANES);
    let mut vc = v.chunks_exact(LANES);
    for (x, y) in (&mut cc).zip(&mut vc) {
        for k in 0..LANES {
            let xp = x[k].max(0.0);
            pos[k] += xp * y[k];
            neg[k] += (xp - x[k]) * y[k];
        }
    }
    let mut ps: f64 = pos.iter().sum();
    let mut ns: f64 = neg.iter().sum();
    for (x, y) in cc.remainder().iter().zip(vc.remainder()) {
        let xp = x.max(0.0);
        ps += xp * y;
        ns += (xp - x) * y;
    }
    (ps, ns)
}

/// Elementwise positive and negative parts, `A = A+ - A-`.
pub fn split_matrix(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    (a.map(|x| x.max(0.0)), a.map(|x| (-x).max(0.0)))
}

/// `F(v) = 1/2 v'Av + b'v + d'|v - v0|`, accumulated per coordinate with
/// compensated summation.
pub fn objective(problem: &QpProblem, v: &DVector<f64>) -> Result<f64> {
    problem.check_point(v, "objective point")?;
    let av = problem.a.tr_mul(v);
    Ok(objective_from_product(problem, v, &av))
}

pub(crate) fn objective_from_product(problem: &QpProblem, v: &DVector<f64>, av: &DVector<f64>) -> f64 {
    linalg::neumaier_sum((0..v.len()).map(|i| 0.5 * v[i] * av[i] + problem.b[i] * v[i] + problem.d[i] * (v[i] - problem.v0[i]).abs()))
}

#[cfg(test)]
mod tests;
