use std::io;

use thiserror::Error;

/// Errors produced anywhere in the imitation-learning pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("invalid transition: {0}")]
    InvalidTransition(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("parse error at {location}: {msg}")]
    Parse { location: String, msg: String },

    #[error("unsupported format version {major}.{minor} (expected major {expected})")]
    UnsupportedVersion { major: u16, minor: u16, expected: u16 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Broad classes of failure, used by front-ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numeric,
}

impl Error {
    pub fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config { key: key.into(), msg: msg.into() }
    }

    pub fn parse(location: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Parse { location: location.into(), msg: msg.into() }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config { .. } | Error::InvalidArgument(_) => ErrorClass::Usage,
            Error::Numeric(_) => ErrorClass::Numeric,
            _ => ErrorClass::Data,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
