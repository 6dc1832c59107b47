use thiserror::Error;

/// Errors produced by the preprocessing pipeline, model and training loop.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty cluster")]
    EmptyCluster,

    #[error("empty dataset")]
    EmptyDataset,

    #[error("unknown id: {kind} {id}")]
    UnknownId { kind: &'static str, id: String },

    #[error("no context")]
    NoContext,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("numerical instability in {param}")]
    NumericalInstability { param: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("bad file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
