use thiserror::Error;

/// Errors reported by the encoder, the loss and the optimizer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("unsupported version {0} (supported: 1..=10)")]
    UnsupportedVersion(u8),

    #[error("mask pattern {0} out of range (0..=7)")]
    InvalidMask(u8),

    #[error("module size {0} px is below the minimum of {1}")]
    ModuleTooSmall(usize, usize),

    #[error("payload of {len} bytes exceeds capacity of {capacity} bytes for version {version}-{level}")]
    PayloadTooLong {
        len: usize,
        capacity: usize,
        version: u8,
        level: char,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
