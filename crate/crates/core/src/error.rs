use std::io;

/// Every failure the library can report.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("spectrum is not conjugate-symmetric (max deviation {0:e})")]
    Asymmetric(f64),

    #[error("invalid kernel: {0}")]
    Kernel(String),

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("length mismatch: {0}")]
    Length(String),

    #[error("unsupported archive version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("architecture mismatch: {0}")]
    Architecture(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_err<T>(what: impl Into<String>) -> Result<T> {
    Err(Error::Shape(what.into()))
}
