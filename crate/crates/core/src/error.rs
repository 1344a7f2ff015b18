use thiserror::Error;

/// Errors raised by the simulator library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A configuration field violates its invariant.
    #[error("invalid config: field `{field}` {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unknown node id {0}")]
    UnknownNode(usize),

    #[error("adjacency matrix is not symmetric at ({0}, {1})")]
    AsymmetricAdjacency(usize, usize),

    #[error("empty mini-batch")]
    EmptyBatch,

    #[error("both accessibility groups are empty")]
    EmptyPartition,

    #[error("infeasible dataset request: {0}")]
    InfeasibleDataset(String),

    /// Every resampling attempt left at least one node without data.
    #[error("degenerate partition: a node received no samples after {0} attempts")]
    DegeneratePartition(usize),

    #[error("solver did not converge after {iterations} iterations (gradient norm {grad_norm:e})")]
    NonConvergence { iterations: usize, grad_norm: f64 },

    #[error("empty input: {0}")]
    Empty(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidConfig {
        field,
        reason: reason.into(),
    }
}
