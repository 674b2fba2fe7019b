use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed input in {context}: {message}")]
    Format { context: String, message: String },

    #[error("duplicate bug id {0:?}")]
    DuplicateId(String),

    #[error("unknown bug id {0:?}")]
    UnknownId(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("feature schema mismatch: model expects {expected}, input has {found}")]
    SchemaMismatch { expected: String, found: String },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("no positive examples: corpus has no duplicate clusters")]
    NoPositives,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("request failed at offset {offset}: {message}")]
    Network { offset: usize, message: String },

    #[error("downstream service {service} unavailable: {message}")]
    Downstream { service: String, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(context: impl Into<String>, message: impl ToString) -> Self {
        Error::Format {
            context: context.into(),
            message: message.to_string(),
        }
    }

    /// Retriable errors are the network ones; everything else is a property of the input.
    pub fn is_retriable(&self) -> bool {
        matches!(self, Error::Network { .. } | Error::Downstream { .. })
    }

    /// Short machine-readable category, used by the CLI exit codes and the HTTP layer.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. } => ErrorKind::Io,
            Error::Network { .. } | Error::Downstream { .. } => ErrorKind::Downstream,
            _ => ErrorKind::Validation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Io,
    Downstream,
    Internal,
}

impl ErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::Validation => "validation",
            ErrorKind::Io => "io",
            ErrorKind::Downstream => "downstream",
            ErrorKind::Internal => "internal",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Validation => 2,
            ErrorKind::Io => 3,
            ErrorKind::Downstream => 4,
            ErrorKind::Internal => 5,
        }
    }
}
