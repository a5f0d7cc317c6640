use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The user received no bandwidth, so the age of its semantic payload is unbounded.
    #[error("no service: transmission rate is zero")]
    NoService,

    #[error("market collapse: {0}")]
    MarketCollapse(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },

    #[error("image dimensions differ: {0:?} vs {1:?}")]
    DimensionMismatch((usize, usize, usize), (usize, usize, usize)),

    /// PSNR is unbounded for identical images.
    #[error("identical images (mse = 0)")]
    IdenticalImages,

    #[error("compression rate {0} is too small for a {1}x{2} image")]
    RateTooSmall(f64, usize, usize),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("invalid image file: {0}")]
    Image(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
