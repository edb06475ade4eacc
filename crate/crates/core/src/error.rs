use std::path::PathBuf;

use crate::gateway::BackendError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("zero vector cannot be normalized")]
    ZeroVector,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid rank {0}: ranks are 1-based")]
    InvalidRank(usize),

    #[error("prototype library is empty")]
    EmptyLibrary,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("all candidate confidences are zero after clamping")]
    DegenerateDistribution,

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error in {location}: {message}")]
    Format { location: String, message: String },

    #[error("template placeholder {{{0}}} is not bound")]
    MissingPlaceholder(String),

    #[error("backend returned an empty rule")]
    EmptyRule,

    #[error("backend returned an empty {0}")]
    EmptyResponse(&'static str),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("category {0} has no support samples")]
    MissingCategorySupport(String),

    #[error("unknown category {0}")]
    UnknownCategory(String),

    #[error("support and test manifests share sample ids: {0}")]
    SupportTestOverlap(String),

    #[error(transparent)]
    Backend(#[from] BackendError),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            location: location.into(),
            message: message.into(),
        }
    }

    /// Process exit code for the CLI: 1 for bad parameters, 2 for
    /// data/format problems, 3 for backend failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_) => 1,
            Error::Backend(_) => 3,
            _ => 2,
        }
    }
}
