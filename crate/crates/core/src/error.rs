use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("no usable rows remain: {0}")]
    EmptyData(String),

    #[error("insufficient history: need at least {needed} hours, got {got}")]
    InsufficientHistory { needed: usize, got: usize },

    #[error("window error: {0}")]
    Window(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("sample too small: need at least {needed}, got {got}")]
    SampleTooSmall { needed: usize, got: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("copula fit failed: {0}")]
    Fit(String),

    #[error("training failed: {0}")]
    Training(String),

    #[error("training diverged at epoch {epoch}: error {error:.6e} exceeds 10x initial {initial:.6e}")]
    Divergence { epoch: usize, error: f64, initial: f64 },

    #[error("metric undefined at index {index}: {reason}")]
    Metric { index: usize, reason: String },

    #[error("model state error: {0}")]
    State(String),

    #[error("document error in `{field}`: {reason}")]
    Document { field: String, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn document(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Document {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for failures caused by the caller's inputs or the filesystem
    /// rather than by a computation.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Io { .. } | Error::Schema(_) | Error::Document { .. } | Error::Config(_)
        )
    }
}
