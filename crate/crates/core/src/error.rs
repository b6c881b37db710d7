use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension { context: &'static str, expected: usize, found: usize },

    /// A problem or configuration invariant does not hold.
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("matrix is not positive semi-definite (factorization failed with jitter up to {max_jitter:e})")]
    NotPsd { max_jitter: f64 },

    #[error("non-finite value produced at coordinate {index} ({what})")]
    NonFinite { index: usize, what: &'static str },

    #[error("logarithm domain violated at coordinate {index}")]
    LogDomain { index: usize },

    #[error("bounds are infeasible for normalization: violating indices {violating:?}")]
    InfeasibleBounds { violating: Vec<usize> },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
        if expected == found {
            Ok(())
        } else {
            Err(Error::Dimension { context, expected, found })
        }
    }
}
