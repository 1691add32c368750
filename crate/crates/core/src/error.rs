use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("format error{}: {msg}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Format { msg: String, line: Option<usize> },

    #[error("record too short: {samples} samples at {fs} Hz (need at least {min_seconds} s)")]
    TooShort {
        samples: usize,
        fs: f64,
        min_seconds: f64,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("network spec error: {0}")]
    Spec(String),

    #[error("training error: {0}")]
    Train(String),

    #[error("unsupported model version {0:?}")]
    Version(String),

    #[error("degenerate statistics: {0}")]
    Degenerate(String),

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format {
            msg: msg.into(),
            line: None,
        }
    }

    pub(crate) fn format_at(line: usize, msg: impl Into<String>) -> Self {
        Error::Format {
            msg: msg.into(),
            line: Some(line),
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Param(msg.into())
    }

    /// Prefixes the message with the record it concerns, keeping the kind.
    pub fn in_record(self, id: &str) -> Self {
        match self {
            Error::Format { msg, line } => Error::Format {
                msg: format!("record {id}: {msg}"),
                line,
            },
            Error::Schema(m) => Error::Schema(format!("record {id}: {m}")),
            Error::Param(m) => Error::Data(format!("record {id}: {m}")),
            Error::Data(m) => Error::Data(format!("record {id}: {m}")),
            Error::TooShort { .. } => Error::Data(format!("record {id}: {self}")),
            other => other,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
