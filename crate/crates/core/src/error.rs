use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid event label {0:?}: coarse category must be one of the 11 canonical names")]
    InvalidEvent(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("duplicate {kind} ids: {ids:?}")]
    DuplicateId { kind: &'static str, ids: Vec<u64> },

    #[error("cosine similarity is undefined for a zero vector")]
    UndefinedSimilarity,

    #[error("feature record references an owner absent from the corpus: {0}")]
    DanglingOwner(String),

    #[error("unknown edge code {0} (valid codes are 0..=113)")]
    UnknownCode(u32),

    #[error("registry violation: {0}")]
    RegistryViolation(String),

    #[error("edge ({head}, {code}, {tail}) references an unknown node or is a self loop")]
    DanglingEdge { head: u32, code: u16, tail: u32 },

    #[error("training diverged: non-finite loss at epoch {epoch}")]
    Divergence { epoch: usize },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
