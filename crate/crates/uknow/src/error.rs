use std::io;
use std::path::{Path, PathBuf};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] uknow_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{path}:{line}: malformed line: {reason}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("{path}: corrupt store: {reason}")]
    CorruptStore { path: PathBuf, reason: String },

    #[error("{0}: no manifest found")]
    MissingManifest(PathBuf),

    #[error("{0}")]
    Usage(String),

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub fn io(path: impl AsRef<Path>, source: io::Error) -> Self {
        Error::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub fn malformed(path: impl AsRef<Path>, line: usize, reason: impl ToString) -> Self {
        Error::MalformedLine {
            path: path.as_ref().to_path_buf(),
            line,
            reason: reason.to_string(),
        }
    }

    pub fn corrupt(path: impl AsRef<Path>, reason: impl ToString) -> Self {
        Error::CorruptStore {
            path: path.as_ref().to_path_buf(),
            reason: reason.to_string(),
        }
    }

    /// Short machine-readable class of the error.
    pub fn kind(&self) -> &'static str {
        use uknow_core::Error as C;
        match self {
            Error::Core(c) => match c {
                C::InvalidArgument(_) => "invalid_argument",
                C::InvalidEvent(_) => "invalid_event",
                C::Schema(_) => "schema",
                C::DuplicateId { .. } => "duplicate_id",
                C::UndefinedSimilarity => "undefined_similarity",
                C::DanglingOwner(_) => "dangling_owner",
                C::UnknownCode(_) => "unknown_code",
                C::RegistryViolation(_) => "registry_violation",
                C::DanglingEdge { .. } => "dangling_edge",
                C::Divergence { .. } => "divergence",
            },
            Error::Io { .. } => "io",
            Error::MalformedLine { .. } => "malformed_line",
            Error::CorruptStore { .. } => "corrupt_store",
            Error::MissingManifest(_) => "missing_manifest",
            Error::Usage(_) => "usage",
            Error::Internal(_) => "internal",
        }
    }

    /// Process exit status: 1 usage, 2 data, 3 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            Error::Internal(_) => 3,
            _ => 2,
        }
    }
}
