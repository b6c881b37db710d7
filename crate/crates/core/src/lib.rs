//! Box-constrained generalized elastic net regression.
//!
//! The estimator solves
//!
//! ```text
//!     minimize     ||Y - X b||^2 + lambda1 * w'|b| + lambda2 * b' Sigma b
//!     subject to   s <= b <= t
//! ```
//!
//! by rewriting it as a quadratic program over the box `[0, l]` with a
//! weighted l1 term anchored at `v0`, which is then solved with a
//! multiplicative-updates iteration ([`qp::solve_qp`]).
//!
//! Module map:
//!
//! * [`qp`]: the QP problem type, the multiplicative update, the solver loop,
//!   KKT residual and the majorizing auxiliary function.
//! * [`model`]: configuration, datasets, presets, and the estimator itself.
//! * [`tuning`]: validation scoring, random search and the sparsity-targeted
//!   bisection on `lambda1`.
//! * [`sim`]: seeded data generators and the replicate benchmark harness.
//! * [`tracking`]: index-tracking workflow on price data.

// `!(x >= 0.0)` is the NaN-rejecting form used throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod json;
pub mod linalg;
pub mod model;
pub mod qp;
pub mod rng;
pub mod sim;
pub mod tracking;
pub mod tuning;

pub use error::{Error, Result};
pub use model::{
    fit, make_preset, predict, transform_to_qp, ArgenConfig, ConfigTemplate, Dataset, FittedModel, Preset, Sigma, Split, WeightMode,
};
pub use qp::{kkt_residual, mu_update, objective, solve_qp, split_matrix, QpProblem, QpSolution, SolverOptions};
