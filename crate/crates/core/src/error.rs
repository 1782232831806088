use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite value produced by {0}")]
    NonFinite(String),
    #[error("tns: bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("tns: unsupported version {0}")]
    UnsupportedVersion(u8),
    #[error("tns: unsupported dtype code {0}")]
    UnsupportedDtype(u8),
    #[error("tns: truncated payload (expected {expected} bytes, found {found})")]
    Truncated { expected: usize, found: usize },
    #[error("divergence after iteration {iteration}: residuals {residuals:?}")]
    Divergence { iteration: usize, residuals: Vec<f64> },
    #[error("non-finite loss at step {step}: {detail}")]
    NonFiniteLoss { step: usize, detail: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Shape(msg.into()))
}

pub(crate) fn arg_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
