use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = VgaError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum VgaError {
    /// Operand shapes are incompatible.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A claim's propagation graph is not a tree rooted at node 0.
    #[error("structure error in claim '{claim}': {message}")]
    Structure { claim: String, message: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Bad magic, truncated payload or unsupported image header.
    #[error("format error: {0}")]
    Format(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// An API precondition was violated by the caller.
    #[error("contract error: {0}")]
    Contract(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    /// NaN or infinity where a finite value was required.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl VgaError {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        VgaError::Dimension(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        VgaError::Config(msg.into())
    }

    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        VgaError::File {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by invalid user configuration rather than data or runtime faults.
    pub fn is_config(&self) -> bool {
        matches!(self, VgaError::Config(_))
    }
}
