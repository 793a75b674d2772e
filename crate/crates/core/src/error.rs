use thiserror::Error;

/// Errors produced by the steganography toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("image too small: {width}x{height}, both sides must be at least 3")]
    DimensionTooSmall { width: usize, height: usize },

    #[error("pixel buffer holds {actual} values, expected {expected}")]
    BufferSize { expected: usize, actual: usize },

    #[error("reconstructed pixel {value} at ({row}, {col}) is outside [0, 255]")]
    OutOfRange { row: usize, col: usize, value: i32 },

    #[error("prediction-error histogram has no zero-frequency bin in (0, 255]")]
    NoZeroBin,

    #[error("capacity exceeded: payload needs {required} eligible positions, {available} available")]
    CapacityExceeded { required: usize, available: usize },

    #[error("malformed stego object: {0}")]
    Malformed(String),

    #[error("integrity check failed: {0}")]
    Tampered(String),

    #[error("invalid key: {0}")]
    InvalidKey(String),

    #[error("chaotic map left the unit interval: {0}")]
    ChaosDomain(String),

    #[error("condition string contains the separator byte '#'")]
    SeparatorCollision,

    #[error("invalid schedule: {0}")]
    Schedule(String),

    #[error("latent state became non-finite at step {step}")]
    NonFinite { step: usize },

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    Shape { expected: Vec<usize>, actual: Vec<usize> },

    #[error("estimator backend: {0}")]
    Backend(String),

    #[error("protocol: {0}")]
    Protocol(String),

    #[error("unsupported image: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
