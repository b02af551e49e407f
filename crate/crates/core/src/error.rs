use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("stiffness assembly did not converge at entry ({row}, {col}): discrepancy {discrepancy:.3e}")]
    Assembly {
        row: usize,
        col: usize,
        discrepancy: f64,
    },

    #[error("oracle quadrature failed: {0}")]
    Oracle(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(&'static str),

    #[error("eigensolver failed after {iterations} iterations: {reason}")]
    Eigensolver { iterations: usize, reason: String },

    #[error("no convergence after {iterations} iterations (last residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("mountain-pass geometry failure: {0}")]
    Geometry(String),

    #[error("non-finite value in {0}")]
    NumericalDomain(&'static str),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn precondition(msg: impl Into<String>) -> Error {
    Error::Precondition(msg.into())
}
