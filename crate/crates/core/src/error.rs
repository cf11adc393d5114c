use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the autodiff engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },
    #[error("non-finite value produced by {op}")]
    Numeric { op: &'static str },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("loss function is not deterministic: {first} then {second} at identical parameters")]
    Determinism { first: f64, second: f64 },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("invalid configuration: {field}: {reason}")]
    Config { field: String, reason: String },
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("malformed {what}: {detail}")]
    Malformed { what: String, detail: String },
    #[error("{path}:{line}: schema error: {detail}")]
    Schema {
        path: PathBuf,
        line: usize,
        detail: String,
    },
    #[error("{path}:{line}: malformed record: {detail}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        detail: String,
    },
    #[error("sequence of length {len} exceeds max_seq_len {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("checkpoint corrupt: {0}")]
    CorruptCheckpoint(String),
    #[error("checkpoint config mismatch: {0}")]
    ConfigMismatch(String),
    #[error("training diverged at step {step}: {detail}")]
    Diverged { step: usize, detail: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the filesystem rather than by content.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io { .. } => true,
            Error::Csv(e) => e.is_io_error(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
