use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A UCR record could not be tokenized.
    #[error("format error on line {line}: {message}")]
    Format { line: usize, message: String },

    /// Every sample of a record was missing.
    #[error("line {line}: all values are missing, record cannot be repaired")]
    UnrecoverableRecord { line: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A vector or row had (near-)zero norm where a direction was required.
    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),

    /// A forward pass produced NaN or infinity.
    #[error("non-finite values produced in {stage}")]
    NonFinite { stage: String },

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

/// Checkpoint decoding failures. Each variant names the offending field.
#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad magic: expected \"TSCA1\", found {found:?}")]
    BadMagic { found: Vec<u8> },

    #[error("truncated {field}: expected {expected} bytes, found {actual}")]
    Truncated {
        field: &'static str,
        expected: u64,
        actual: u64,
    },

    #[error("malformed header field `{field}`: {message}")]
    Header { field: String, message: String },

    #[error("shape mismatch for tensor `{tensor}`: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        tensor: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("offset mismatch for tensor `{tensor}`: expected {expected}, found {found}")]
    OffsetMismatch {
        tensor: String,
        expected: u64,
        found: u64,
    },
}
