//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

/// Compensated (Neumaier) summation.
pub fn neumaier_sum<I: IntoIterator<Item = f64>>(terms: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for x in terms {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Largest `|A_ij - A_ji|` over the matrix.
pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    let p = a.nrows();
    let mut worst = 0.0_f64;
    for j in 0..p {
        for i in (j + 1)..p {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

/// `(A + A') / 2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    let p = a.nrows();
    DMatrix::from_fn(p, p, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]))
}

pub fn symmetrize_in_place(a: &mut DMatrix<f64>) {
    let p = a.nrows();
    for j in 0..p {
        for i in (j + 1)..p {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
}

/// Jitter schedule relative to `trace(A)/p`.
const JITTER_SCHEDULE: [f64; 4] = [0.0, 1e-14, 1e-12, 1e-10];

/// Checks that a symmetric matrix is positive semi-definite by attempting a
/// Cholesky factorization of `A + jitter * I`, with `jitter` at most
/// `1e-10 * trace(A) / p`. Returns the jitter that succeeded.
pub fn check_psd(a: &DMatrix<f64>) -> Result<f64> {
    let p = a.nrows();
    if p == 0 {
        return Ok(0.0);
    }
    let trace = a.trace();
    let scale = trace / p as f64;
    if !(scale >= 0.0) {
        return Err(Error::NotPsd { max_jitter: 0.0 });
    }
    if scale == 0.0 {
        // Zero diagonal: PSD only if the whole matrix vanishes.
        return if a.iter().all(|&x| x == 0.0) { Ok(0.0) } else { Err(Error::NotPsd { max_jitter: 0.0 }) };
    }
    for rel in JITTER_SCHEDULE {
        let jitter = rel * scale;
        let mut shifted = a.clone();
        for i in 0..p {
            shifted[(i, i)] += jitter;
        }
        if Cholesky::new(shifted).is_some() {
            return Ok(jitter);
        }
    }
    Err(Error::NotPsd { max_jitter: 1e-10 * scale })
}

/// `X'X`, exactly symmetric.
pub fn gram(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut g = x.transpose() * x;
    symmetrize_in_place(&mut g);
    g
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len();
    Some(if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) })
}
