use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension {dim}: at least {min} required")]
    InvalidDimension { dim: usize, min: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("batch capacity: {0}")]
    Capacity(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("no candidate negatives for anchor {anchor}")]
    EmptySupport { anchor: usize },

    #[error("degenerate embedding output (pre-normalization norm {norm:e})")]
    DegenerateOutput { norm: f64 },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("k = {k} out of range for {n} examples")]
    KOutOfRange { k: usize, n: usize },

    #[error("instance has {size} distances; exact solver limit is {limit}")]
    SizeLimit { size: usize, limit: usize },

    #[error("batch {batch}: {source}")]
    InBatch { batch: usize, source: Box<Error> },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
