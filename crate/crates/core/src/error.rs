use std::fmt;

use thiserror::Error;

/// Broad failure classes. The CLI maps each one onto a process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Domain,
    Resource,
    Precondition,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("field mismatch: {left} vs {right}")]
    FieldMismatch { left: String, right: String },

    #[error("{0}")]
    Usage(String),

    #[error("syntax error at column {column}: {message}")]
    Syntax { column: usize, message: String },

    #[error("unbound variable `{0}`")]
    UnboundVariable(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("enumeration budget exceeded: {required} points required, limit is {limit}")]
    Budget { required: u128, limit: u64 },

    #[error("invalid distribution: {0}")]
    InvalidDist(String),

    #[error("parse error on line {line}: {message}")]
    Format { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::FieldMismatch { .. }
            | Error::Usage(_)
            | Error::Syntax { .. }
            | Error::UnboundVariable(_)
            | Error::InvalidDist(_)
            | Error::Format { .. } => ErrorKind::Usage,
            Error::Domain(_) => ErrorKind::Domain,
            Error::Precondition(_) => ErrorKind::Precondition,
            Error::Budget { .. } => ErrorKind::Resource,
            Error::Io(_) | Error::Json(_) => ErrorKind::Io,
        }
    }

    pub(crate) fn mismatch(left: impl fmt::Display, right: impl fmt::Display) -> Self {
        Error::FieldMismatch {
            left: left.to_string(),
            right: right.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
