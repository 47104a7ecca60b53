use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("index {index} out of range for layer {layer} with {size} codewords")]
    IndexOutOfRange {
        layer: usize,
        index: usize,
        size: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("layer {layer} needs {requested} codewords, above the cap of {cap}")]
    Capacity {
        layer: usize,
        requested: f64,
        cap: usize,
    },

    #[error("layer {layer} overfits (test/train ratio {ratio:.4}) under the strict policy")]
    Overfit { layer: usize, ratio: f64 },

    #[error("malformed data: {0}")]
    Format(String),

    #[error("truncated input: {0}")]
    Truncated(String),

    #[error("model hash mismatch: bitstream references {expected:016x}, model is {found:016x}")]
    HashMismatch { expected: u64, found: u64 },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for errors caused by the filesystem rather than by bad input.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io(_) => true,
            Error::Csv(e) => e.is_io_error(),
            _ => false,
        }
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
