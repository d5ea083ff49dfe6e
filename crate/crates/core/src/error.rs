use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    MalformedRow {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("dataset is empty after filtering")]
    EmptyDataset,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("width mismatch: expected {expected}, got {actual}")]
    WidthMismatch { expected: usize, actual: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("user {user} has interacted with every item; no negative exists")]
    NoNegativeAvailable { user: u32 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("fewer than {required} users available for grouping (got {actual})")]
    TooFewUsers { required: usize, actual: usize },

    #[error("retrieval paths disagree for query {query}")]
    RankingMismatch { query: usize },

    #[error("bad file format: {0}")]
    Format(String),

    #[error("unknown id {0:?}")]
    UnknownId(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
