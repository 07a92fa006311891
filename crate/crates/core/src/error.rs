//! Crate-wide error type.
//!
//! Variants are grouped by how callers are expected to react: `Shape`,
//! `Domain`, `Contract` and `Parse` indicate bad inputs; `Adapter`,
//! `Transport` and `Protocol` come from model adapters; `Corruption` and
//! `Consistency` come from snapshot loading.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Mismatched tensor/frame dimensions.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Input outside the mathematical domain of an operation
    /// (invalid distribution, negative probability, support violation).
    #[error("domain error: {0}")]
    Domain(String),

    /// A caller broke an API contract (wrong arity, invalid action,
    /// group too small, out-of-vocabulary token).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Malformed text or binary input.
    #[error("parse error: {0}")]
    Parse(String),

    /// A model adapter failed.
    #[error("adapter error: {0}")]
    Adapter(String),

    /// Remote transport failure (connect, timeout, retry exhaustion).
    #[error("transport error: {0}")]
    Transport(String),

    /// The remote server answered but the body did not match the
    /// capability's expected shape. Carries the raw body.
    #[error("protocol error: {detail}; body: {body:?}")]
    Protocol { detail: String, body: String },

    /// A snapshot file failed its digest, magic or length check.
    #[error("corrupt snapshot: {0}")]
    Corruption(String),

    /// Snapshot files disagree with each other or with the manifest.
    #[error("inconsistent snapshot: {0}")]
    Consistency(String),

    /// Bad configuration key or value.
    #[error("config error: {0}")]
    Config(String),

    /// Training produced non-finite parameters.
    #[error("training diverged at epoch {epoch}: {detail}")]
    Training { epoch: usize, detail: String },

    #[error("{path}: {source}")]
    IoAt {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn io_at(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::IoAt {
            path: path.into(),
            source,
        }
    }
}
