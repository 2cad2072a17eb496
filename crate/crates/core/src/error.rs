use thiserror::Error;

/// Errors raised by the core algorithms.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("operator is not Hermitian (max |M - M^dagger| = {residual:e})")]
    NotHermitian { residual: f64 },

    #[error("state has zero or non-finite norm")]
    InvalidState,

    #[error("non-finite value in {what}")]
    NonFinite { what: String },

    #[error("{what} = {value} outside [{min}, {max}]")]
    OutOfBounds {
        what: String,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("all {starts} optimization starts failed; first error: {first}")]
    AllStartsFailed { starts: usize, first: String },

    #[error("sweep failed at {failed} of {total} nodes")]
    SweepFailed { failed: usize, total: usize },

    #[error("branch {branch} has {nodes} valid node(s) on axis {axis}; need at least 2")]
    InsufficientNodes {
        branch: usize,
        axis: usize,
        nodes: usize,
    },

    #[error("branch {branch} does not cover a complete tensor grid ({present} of {required} nodes)")]
    IncompleteBranch {
        branch: usize,
        present: usize,
        required: usize,
    },

    #[error("unknown branch id {0}")]
    UnknownBranch(usize),

    #[error("query point outside the sampled region on axis {axis}: {value} not in [{min}, {max}]")]
    OutOfHull {
        axis: usize,
        value: f64,
        min: f64,
        max: f64,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
