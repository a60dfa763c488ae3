use std::io;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    /// Bad magic, unsupported version or malformed header/label block.
    #[error("format error: {0}")]
    Format(String),

    /// Header dimensions disagree with the number of payload bytes.
    #[error("truncated or oversized payload: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },

    /// Non-finite or out-of-range values.
    #[error("data error: {0}")]
    Data(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Problem too large (or too small) for the requested operation.
    #[error("capacity error: {0}")]
    Capacity(String),

    /// Paired inputs disagree on frame count or sampling rate.
    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("batch error: {0}")]
    Batch(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("label error: {0}")]
    Label(String),

    #[error("all aggregation weights are zero")]
    DegenerateWeights,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
