use thiserror::Error;

/// Errors raised by the analytic and simulation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum RiskError {
    #[error("invalid model: {}", .0.join("; "))]
    InvalidModel(Vec<String>),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("no Cramér root (heavy tail or subcritical tilt range): {0}")]
    NoCramerRoot(String),

    #[error("net profit violated: {0}")]
    NetProfit(String),

    #[error("reducible generator: communicating classes {0:?}")]
    Reducible(Vec<Vec<usize>>),

    #[error("multiple root detected near {0}; perturb q slightly")]
    MultipleRoot(String),

    #[error("claim law {0} does not support this operation: {1}")]
    Unsupported(String, String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("ill-conditioned matrix (condition {0:.3e}): {1}")]
    IllConditioned(f64, String),

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, RiskError>;
