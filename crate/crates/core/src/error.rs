use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("autodiff: {0}")]
    Tape(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("simulation: {0}")]
    Sim(String),

    #[error(transparent)]
    Decode(#[from] DecodeError),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }
}

/// Structured failures while decoding one of the binary file formats.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("bad magic bytes: expected {expected:?}")]
    BadMagic { expected: &'static str },

    #[error("unsupported version {0}")]
    UnsupportedVersion(u8),

    #[error("unknown dtype tag {0}")]
    UnknownDtype(u8),

    #[error("truncated input: needed {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },

    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),

    #[error("malformed header: {0}")]
    Header(String),

    #[error("value out of range at element {index}")]
    OutOfRange { index: usize },
}
