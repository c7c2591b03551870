//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("type error: {0}")]
    Type(String),

    #[error("no identity for invariant monoid")]
    NoZero,

    #[error("invariant value changed: {left} vs {right}")]
    BoxConflict { left: String, right: String },

    #[error("integer overflow")]
    Overflow,

    #[error("division by zero")]
    DivByZero,

    #[error("unbound variable `{0}`")]
    UnboundVar(String),

    #[error("unbound source {0}")]
    UnboundSource(usize),

    #[error("not in normal form at {path}: {reason}")]
    NotNormalized { path: String, reason: String },

    #[error("monoid inference failed at {path}: {reason}")]
    Inference { path: String, reason: String },

    #[error("query not incrementalizable at {path}: {reason}")]
    NotIncrementalizable { path: String, reason: String },

    #[error("no diminisher for {0}: query does not support deletions")]
    NoDiminisher(String),

    #[error("malformed state: {0}")]
    MalformedState(String),

    #[error("parse error at {line}:{col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },

    #[error("row {row}: {msg}")]
    Schema { row: usize, msg: String },

    #[error("io error: {0}")]
    Io(String),

    #[error("deletion batch exceeds the stream contents (strict mode, source {0})")]
    DeletionSubset(usize),

    #[error("{0}")]
    Session(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
