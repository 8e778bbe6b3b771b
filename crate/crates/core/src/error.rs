use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, MmffError>;

#[derive(Debug, Error)]
pub enum MmffError {
    /// Operand shapes do not conform for the named operation.
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("usage error: {0}")]
    Usage(String),

    /// Optimizer or model state is inconsistent (e.g. a trainable parameter without a gradient).
    #[error("state error: {0}")]
    State(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("checkpoint version mismatch: file has version {found}, this build reads version {expected}")]
    Version { found: u32, expected: u32 },

    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
}

impl MmffError {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        MmffError::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MmffError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    ///
    /// 1 = usage/configuration, 2 = data or file format, 3 = numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            MmffError::Usage(_) | MmffError::Config(_) => 1,
            MmffError::Numeric(_) => 3,
            MmffError::Dimension { .. }
            | MmffError::State(_)
            | MmffError::Data(_)
            | MmffError::Io { .. }
            | MmffError::Format(_)
            | MmffError::Version { .. }
            | MmffError::Corrupt(_) => 2,
        }
    }
}
