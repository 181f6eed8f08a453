use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Record { line: usize, message: String },

    #[error("dialect mismatch: expected {expected}, found other dialects in samples {}", .ids.join(", "))]
    DialectMismatch { expected: String, ids: Vec<String> },

    #[error("config: {0}")]
    Config(String),

    #[error("non-finite reward at index {index}")]
    NonFinite { index: usize },

    #[error("empty reward group")]
    EmptyGroup,

    #[error("{field} has length {got}, expected {expected}")]
    LengthMismatch {
        field: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{0} log-probabilities are required")]
    MissingLogProbs(&'static str),

    #[error(transparent)]
    Judge(#[from] crate::judge::JudgeError),

    #[error("sample {id}: {source}")]
    SampleJudge {
        id: String,
        #[source]
        source: crate::judge::JudgeError,
    },

    #[error("oracle: {0}")]
    Oracle(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
