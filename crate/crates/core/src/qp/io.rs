//! JSON forms of [`QpProblem`] and [`QpSolution`].

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{QpProblem, QpSolution};
use crate::error::{Error, Result};
use crate::json::extended_vec;

/// `{"A": [[..], ..], "b": [..], "d": [..], "v0": [..], "l": [.., "inf"]}`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QpProblemJson {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub d: Vec<f64>,
    pub v0: Vec<f64>,
    #[serde(with = "extended_vec")]
    pub l: Vec<f64>,
}

impl QpProblemJson {
    pub fn from_problem(problem: &QpProblem) -> Self {
        let a = problem.a();
        Self {
            a: (0..a.nrows()).map(|i| a.row(i).iter().copied().collect()).collect(),
            b: problem.b().as_slice().to_vec(),
            d: problem.d().as_slice().to_vec(),
            v0: problem.v0().as_slice().to_vec(),
            l: problem.l().as_slice().to_vec(),
        }
    }

    /// Validates and builds the problem.
    pub fn into_problem(self) -> Result<QpProblem> {
        let p = self.a.len();
        for row in &self.a {
            Error::check_len("row of A", p, row.len())?;
        }
        let a = DMatrix::from_fn(p, p, |i, j| self.a[i][j]);
        QpProblem::new(a, DVector::from_vec(self.b), DVector::from_vec(self.d), DVector::from_vec(self.v0), DVector::from_vec(self.l))
    }

    pub fn parse(text: &str) -> Result<QpProblem> {
        let raw: Self = serde_json::from_str(text)?;
        raw.into_problem()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QpSolutionJson {
    pub v: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub converged: bool,
}

impl From<&QpSolution> for QpSolutionJson {
    fn from(s: &QpSolution) -> Self {
        Self {
            v: s.v.as_slice().to_vec(),
            objective: s.objective,
            iterations: s.iterations,
            kkt_residual: s.kkt_residual,
            converged: s.converged,
        }
    }
}
