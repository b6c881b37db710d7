use std::fmt;

/// Outcome classes with disjoint exit codes.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, unknown preset, malformed or invalid input.
    Usage(String),
    /// The solver stopped before meeting its tolerance.
    NotConverged(String),
    /// Missing, unreadable or malformed data files.
    Data(String),
    /// Bounds that admit no feasible normalized portfolio, or an empty box.
    Infeasible(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::NotConverged(_) => 2,
            Failure::Data(_) => 3,
            Failure::Infeasible(_) => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "error: {m}"),
            Failure::NotConverged(m) => write!(f, "not converged: {m}"),
            Failure::Data(m) => write!(f, "data error: {m}"),
            Failure::Infeasible(m) => write!(f, "infeasible bounds: {m}"),
        }
    }
}

impl From<argen::Error> for Failure {
    fn from(e: argen::Error) -> Self {
        use argen::Error as E;
        let msg = e.to_string();
        match e {
            E::InfeasibleBounds { .. } => Failure::Infeasible(msg),
            E::Io(_) | E::Csv(_) | E::Data(_) | E::InsufficientData(_) => Failure::Data(msg),
            E::NonFinite { .. } | E::LogDomain { .. } => Failure::NotConverged(msg),
            E::Dimension { .. } | E::Invalid(_) | E::NotPsd { .. } | E::Json(_) => Failure::Usage(msg),
        }
    }
}
