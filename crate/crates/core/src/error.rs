use std::path::PathBuf;

use crate::adapter::AdapterError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("schema violation in {context}: {message}")]
    Schema { context: String, message: String },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Adapter(#[from] AdapterError),
    #[error("{source} ({completed} of {total} items paraphrased before abort)")]
    Augment {
        completed: usize,
        total: usize,
        #[source]
        source: crate::augment::ParaphraseError,
    },
}

impl Error {
    pub(crate) fn read(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Read {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn write(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Write {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn schema(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            context: context.into(),
            message: message.into(),
        }
    }

    /// True for failures of the model transport layer (as opposed to bad
    /// input or local I/O).
    pub fn is_transport(&self) -> bool {
        match self {
            Error::Adapter(e) => matches!(e, AdapterError::Transport { .. }),
            Error::Augment { source, .. } => matches!(source.source, AdapterError::Transport { .. }),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
