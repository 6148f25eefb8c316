use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("label error: {0}")]
    Label(String),
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("invalid specification: {0}")]
    Spec(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("training diverged: {0}")]
    Training(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("baseline unavailable: {0}")]
    BaselineUnavailable(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("import error: {0}")]
    Import(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("undefined: {0}")]
    Undefined(String),
    #[error("incomplete grid: {0}")]
    IncompleteGrid(String),
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}
