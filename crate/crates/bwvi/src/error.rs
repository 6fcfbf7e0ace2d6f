//! Error taxonomy shared across the crate.

use thiserror::Error;

/// Unified error type. Numerical failures carry enough context to tell a
/// genuinely indefinite input apart from one that merely drifted.
#[derive(Debug, Error)]
pub enum Error {
    /// A Cholesky pivot fell at or below the positive-definiteness gate.
    #[error("matrix is not positive definite (pivot {pivot:.3e} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    /// An eigenvalue fell below the negative tolerance allowed for
    /// positive-semidefinite inputs.
    #[error("matrix is not positive semidefinite (eigenvalue {eigenvalue:.3e})")]
    NotPositiveSemiDefinite { eigenvalue: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("{what} is not a square matrix ({rows}x{cols})")]
    NotSquare { what: &'static str, rows: usize, cols: usize },

    #[error("matrix is not symmetric (max |a_ij - a_ji| = {deviation:.3e})")]
    NotSymmetric { deviation: f64 },

    #[error("matrix contains a non-finite entry")]
    NonFiniteEntry,

    /// Iterative eigenvalue extraction hit its iteration cap.
    #[error("eigendecomposition failed to converge")]
    ConvergenceFailure,

    /// A variance ratio was requested with a non-positive denominator.
    #[error("degenerate variance: var_mc = {0:.3e}")]
    DegenerateVariance(f64),

    /// A documented precondition of an analytic formula does not hold.
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    /// The Hessian at a mode candidate is not positive definite.
    #[error("Hessian is not positive definite at the mode candidate")]
    NonPdHessianAtMode,

    /// An iterative solver exhausted its budget without meeting its tolerance.
    #[error("no convergence after {0} iterations")]
    NoConvergence(usize),

    #[error("unknown preset: {0}")]
    UnknownPreset(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
