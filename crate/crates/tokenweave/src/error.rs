use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A share, block, or token could not be assembled from its inputs.
    #[error("construction error: {0}")]
    Construction(String),

    /// An operation was called outside its supported domain.
    #[error("usage error: {0}")]
    Usage(String),

    /// A pattern search did not isolate exactly one partition's worth of
    /// positions, so no key material can be read out.
    #[error("ambiguous extraction: expected {expected} matched positions, found {found}")]
    ExtractionAmbiguous { expected: usize, found: usize },

    /// A token or plan request is geometrically invalid.
    #[error("plan error: {0}")]
    Plan(String),

    /// A group specification references keys its members do not hold, or
    /// fails the exclusivity check against non-members.
    #[error("group spec error: {0}")]
    GroupSpec(String),

    /// A persisted document is malformed or fails schema validation.
    #[error("document error: {0}")]
    Document(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
