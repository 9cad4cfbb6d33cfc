use thiserror::Error;

/// Crate-wide error type.
///
/// Variants mirror the failure classes of the engine: container/format
/// problems, tensor shape mismatches, numeric domain violations, cache and
/// state misuse, and degenerate analysis inputs.
#[derive(Debug, Error)]
pub enum Error {
    /// Container magic/version/layout violations.
    #[error("format error: {0}")]
    Format(String),

    /// Tensor or vector dimensions inconsistent with the declared config.
    #[error("shape error: {0}")]
    Shape(String),

    /// A value outside its numeric domain (non-finite weight, score out of
    /// range, unnormalized distribution).
    #[error("value error: {0}")]
    Value(String),

    /// Attention over an empty context.
    #[error("empty context: attention requires at least one key")]
    EmptyContext,

    /// Sequence would exceed the model's maximum length.
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// Operation invoked on state that is not ready for it.
    #[error("state error: {0}")]
    State(String),

    /// A distribution with no mass where positive mass is required.
    #[error("degenerate distribution: {0}")]
    DegenerateDistribution(String),

    /// An index or count outside the valid range for the operation.
    #[error("range error: {0}")]
    Range(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
