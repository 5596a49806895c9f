use thiserror::Error;

/// Errors raised by the block-level library API.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("length {len} is not a multiple of {block}")]
    NonDivisibleLength { len: usize, block: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("invalid key: {0}")]
    InvalidKey(String),
    #[error("value does not fit in 129 bits")]
    Fixed129Overflow,
    #[error("cannot parse fixed-point value: {0}")]
    Fixed129Parse(String),
}
