use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A line of a line-delimited file could not be read as a record.
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// A record parsed but violates a type invariant.
    #[error("record {id}: {rule}")]
    Invariant { id: String, rule: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The chat model answered with something that is not a usable distractor list.
    #[error("unusable completion: {0}")]
    Completion(String),

    /// Transport or backend failure reported by an external service.
    #[error("provider error: {0}")]
    Provider(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn is_provider(&self) -> bool {
        matches!(self, Error::Provider(_))
    }
}
