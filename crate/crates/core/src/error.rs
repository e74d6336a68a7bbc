use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unvoted pair {pair_id}: no votes and no label")]
    UnvotedPair { pair_id: String },

    #[error("tied pair {pair_id}: {votes}-{votes} with no label")]
    TiedPair { pair_id: String, votes: u32 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid embedding: {0}")]
    InvalidEmbedding(String),

    #[error("invalid head: {0}")]
    InvalidHead(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("category {category}: needs {needed}, holds {available} (shortfall {shortfall})")]
    Shortfall {
        category: String,
        needed: usize,
        available: usize,
        shortfall: usize,
    },

    #[error("degenerate ranking: {0}")]
    DegenerateRanking(&'static str),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("model sets differ: {}", .symmetric_difference.join(", "))]
    ModelSetMismatch { symmetric_difference: Vec<String> },

    #[error("generator {generator} returned {got} samples, expected {expected}")]
    BatchSize {
        generator: String,
        expected: usize,
        got: usize,
    },

    #[error("generator {generator}: {message}")]
    Generator { generator: String, message: String },

    #[error("non-finite loss at step {step} (pair {pair_id})")]
    NonFiniteLoss { step: usize, pair_id: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.to_string(),
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }
}
