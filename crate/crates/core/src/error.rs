use thiserror::Error;

use crate::spectral::MESolveReport;

/// Errors raised by the core library.
#[derive(Debug, Error)]
pub enum GrfError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("covariance sequence is not positive definite (failed at lag {lag})")]
    Infeasible { lag: usize },

    #[error("dual Newton did not converge after {} iterations (gradient norm {:.3e})", .0.iterations, .0.final_gradient_norm)]
    NonConvergence(Box<MESolveReport>),

    #[error("spectral factor band did not converge up to N = {trunc_n}; try a larger truncation")]
    FactorNotConverged { trunc_n: usize },

    #[error("unstable filter: {0}")]
    Unstable(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("problem size {size} exceeds the dense cap {cap}; use the filtering path instead")]
    SizeCap { size: usize, cap: usize },

    #[error("unsupported refinement: {0}")]
    UnsupportedRefinement(String),

    #[error("degenerate filter: {0}")]
    DegenerateFilter(String),

    #[error("inconsistent refinement state: {0}")]
    InconsistentState(String),
}

pub type Result<T> = std::result::Result<T, GrfError>;
