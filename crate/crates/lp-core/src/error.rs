use thiserror::Error;

/// Errors produced by the library.
#[derive(Error, Debug)]
pub enum LpError {
    #[error("{op}: dimension mismatch, expected {expected}, got {got}")]
    DimensionMismatch {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("invalid network spec: {0}")]
    InvalidSpec(String),

    #[error("unknown variable: {0}")]
    UnknownVariable(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("divergence at iteration {iter}: non-finite {what}")]
    Divergence { what: String, iter: usize },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, LpError>;
