use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("capacity: {0}")]
    Capacity(String),
    #[error("domain: {0}")]
    Domain(String),
    #[error("numeric: {0}")]
    Numeric(String),
    #[error("usage: {0}")]
    Usage(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn capacity<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Capacity(msg.into()))
}
