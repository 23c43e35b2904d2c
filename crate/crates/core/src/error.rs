use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value at step {index} (t = {time}): {detail}")]
    NonFinite {
        index: usize,
        time: f64,
        detail: String,
    },

    #[error("requested times not on the path grid: {0:?}")]
    TimeNotOnGrid(Vec<f64>),

    #[error("matrix {what} is singular or not positive definite{}", .time.map(|t| format!(" at t = {t}")).unwrap_or_default())]
    Singular { what: &'static str, time: Option<f64> },

    #[error("Lyapunov operator is singular: eigenvalues {0} and {1} sum to (numerically) zero")]
    LyapunovSingular(String, String),

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("weighted design for hazard {hazard} is rank deficient")]
    RankDeficient { hazard: usize },

    #[error("infeasible constraint: {0}")]
    Infeasible(String),
}

pub type Result<T> = std::result::Result<T, Error>;
