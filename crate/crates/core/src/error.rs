use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("out of bounds: {0}")]
    Bounds(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("object {0:?} has no valid-depth pixels")]
    EmptyObject(String),
    #[error("invalid value: {0}")]
    Invalid(String),
    #[error("manifest error in clip {clip:?}, field {field:?}: {reason}")]
    Manifest {
        clip: String,
        field: String,
        reason: String,
    },
    #[error("parse error in {path}: {reason}")]
    Parse { path: PathBuf, reason: String },
    #[error("format error: {0}")]
    Format(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            reason: reason.to_string(),
        }
    }

    /// The message without the class prefix, for nesting inside other errors.
    pub fn detail(&self) -> String {
        match self {
            Error::Domain(m) | Error::Bounds(m) | Error::Shape(m) | Error::Invalid(m) | Error::Format(m) => m.clone(),
            other => other.to_string(),
        }
    }

    /// Short machine-readable class name, used for exit codes and error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Bounds(_) => "bounds",
            Error::Shape(_) => "shape",
            Error::EmptyObject(_) => "empty_object",
            Error::Invalid(_) => "invalid",
            Error::Manifest { .. } => "manifest",
            Error::Parse { .. } => "parse",
            Error::Format(_) => "format",
            Error::Io { .. } => "io",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
