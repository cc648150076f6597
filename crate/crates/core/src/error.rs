use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("page address {0:#x} is out of range")]
    AddressOutOfRange(u64),

    #[error("page {0:#x} has never been written")]
    UnwrittenPage(u64),

    #[error("flash capacity exceeded: need {needed} pages, {available} free")]
    CapacityExceeded { needed: u64, available: u64 },

    #[error("document chunk of {size} bytes exceeds the page size {page_size}")]
    ChunkTooLarge { size: usize, page_size: usize },

    #[error("unknown database id {0}")]
    UnknownDatabase(u8),

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
