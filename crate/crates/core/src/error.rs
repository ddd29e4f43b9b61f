use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum StereoError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("format error in {path}: {message} (byte offset {offset})")]
    Format {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("non-finite value in phi at ({x}, {y}) after descent step; dt is likely too large")]
    Diverged { x: usize, y: usize },

    #[error("non-finite energy at iteration {0}")]
    NonFiniteEnergy(usize),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, StereoError>;

pub(crate) fn invalid(msg: impl Into<String>) -> StereoError {
    StereoError::InvalidInput(msg.into())
}
