use std::path::PathBuf;

use thiserror::Error;

use crate::data::TaskId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },

    #[error("{context}: unknown label {label:?} for task {task}")]
    UnknownLabel {
        task: TaskId,
        label: String,
        context: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("fingerprint mismatch ({context}): expected {expected}, found {found}")]
    FingerprintMismatch {
        context: String,
        expected: String,
        found: String,
    },

    #[error("non-finite loss {value} at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize, value: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("runtime failure: {0}")]
    Runtime(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 for anything the caller can fix by changing
    /// inputs or configuration, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFiniteLoss { .. } | Error::Io { .. } | Error::Runtime(_) => 2,
            _ => 1,
        }
    }
}
