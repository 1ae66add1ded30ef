use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = HighwayError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum HighwayError {
    #[error("node index {index} out of range for graph with {n} nodes")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("{path}:{line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: unknown node id `{id}`")]
    UnknownNode { path: PathBuf, line: usize, id: String },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("{path}: feature width {found} differs from {expected} on line {line}")]
    FeatureWidth {
        path: PathBuf,
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("category `{category}` has {available} nodes, {required} required")]
    CategoryTooSmall {
        category: String,
        available: usize,
        required: usize,
    },

    #[error("category `{0}` has no training node")]
    CategoryMissing(String),

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty index set")]
    EmptySet,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl HighwayError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HighwayError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for invalid configuration values, as opposed to bad input data.
    pub fn is_config_error(&self) -> bool {
        matches!(self, HighwayError::Config(_))
    }
}
