use std::path::PathBuf;

/// Result alias used throughout the crate.
pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure category. The CLI maps these onto process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad user input: malformed files, missing paths, invalid arguments.
    Input,
    /// A remote embedding service failed or misbehaved.
    External,
    /// An internal numeric or structural invariant was violated.
    Internal,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}:{line}: malformed record: {reason}", path.display())]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("duplicate document id {0:?}")]
    DuplicateId(String),

    #[error("unknown label {0:?}")]
    UnknownLabel(String),

    #[error("document {0:?} is empty after normalization")]
    EmptyDocument(String),

    #[error("invalid label set: {0}")]
    InvalidLabelSet(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("embedding provider error: {0}")]
    Provider(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("degenerate distribution: {0}")]
    Degenerate(String),

    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Provider(_) => ErrorKind::External,
            Error::NonFinite(_) | Error::Degenerate(_) | Error::DimensionMismatch { .. } => {
                ErrorKind::Internal
            }
            _ => ErrorKind::Input,
        }
    }

    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }
}
