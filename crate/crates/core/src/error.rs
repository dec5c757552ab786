use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised across the crate.
///
/// Variants are grouped by category so that front ends can map them onto
/// distinct exit codes (see [`Error::category`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("softmax over an empty context (every entry masked)")]
    EmptyContext,

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),

    #[error("index {index} out of range for {what} with {len} rows")]
    Index { what: &'static str, index: usize, len: usize },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("line {line}: response must be 0 or 1, got {value:?}")]
    InvalidResponse { line: usize, value: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("need at least {needed} students to split, got {got}")]
    TooFewStudents { needed: usize, got: usize },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("non-finite gradient in parameter group `{group}`")]
    NanGradient { group: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },
}

/// Coarse failure category, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Config,
    Data,
    Numeric,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn category(&self) -> Category {
        match self {
            Error::Config(_) | Error::Checkpoint(_) => Category::Config,
            Error::Parse { .. }
            | Error::InvalidResponse { .. }
            | Error::Io { .. }
            | Error::TooFewStudents { .. }
            | Error::UndefinedMetric(_)
            | Error::Index { .. } => Category::Data,
            Error::Shape { .. }
            | Error::NonFinite { .. }
            | Error::EmptyContext
            | Error::NotScalar(_)
            | Error::NanGradient { .. } => Category::Numeric,
            Error::Fold { source, .. } => source.category(),
        }
    }
}
