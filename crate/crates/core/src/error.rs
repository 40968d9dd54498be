use thiserror::Error;

use crate::sdp::SolveStatus;

pub type Result<T, E = SteeringError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SteeringError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not Hermitian (max asymmetry {asymmetry:.3e})")]
    NotHermitian { asymmetry: f64 },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("member ({a},{x}) is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPsd { a: usize, x: usize, min_eigenvalue: f64 },

    #[error("no-signaling violated between inputs {x0} and {x1} (residual {residual:.3e})")]
    Signaling { x0: usize, x1: usize, residual: f64 },

    #[error("assemblage trace {trace} exceeds 1")]
    TraceExceeded { trace: f64 },

    #[error("invalid measurement: {0}")]
    InvalidMeasurement(String),

    #[error("invalid probability table: {0}")]
    InvalidProbTable(String),

    #[error("size cap exceeded: {0}")]
    SizeCap(String),

    #[error("eigensolver did not converge after {sweeps} sweeps")]
    EigenNonConvergence { sweeps: usize },

    #[error("solver returned {status:?}: {detail}")]
    Solver { status: SolveStatus, detail: String },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("internal consistency check failed: {0}")]
    Internal(String),

    #[error("operation cancelled")]
    Cancelled,

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
