use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("singular Jacobian in linear solve")]
    SingularJacobian,

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        /// Best iterate found, in the caller's coordinates.
        best: Vec<f64>,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("zero is outside the convex hull of the unit scores")]
    HullViolation,

    #[error("bootstrap unstable: {failed} of {total} resamples failed")]
    BootstrapUnstable { failed: usize, total: usize },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
