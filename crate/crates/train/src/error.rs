use std::fmt;

use igkit_core::CoreError;
use igkit_image::ImageError;

#[derive(Debug)]
pub enum TrainError {
    /// Bad configuration (unknown key, invalid value, inconsistent set).
    Config(String),
    /// Dataset problems: missing directory, unreadable or unusable images.
    Data(String),
    /// Loss went non-finite; carries the diagnostic dump.
    NonFinite { step: usize, scale: usize, l1: f64, freq: f64 },
    Core(CoreError),
    Image(ImageError),
    Io { path: String, detail: String },
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainError::Config(s) => write!(f, "config error: {s}"),
            TrainError::Data(s) => write!(f, "data error: {s}"),
            TrainError::NonFinite { step, scale, l1, freq } => write!(
                f,
                "non-finite loss at step {step} (scale x{scale}): l1 = {l1}, freq = {freq}"
            ),
            TrainError::Core(e) => write!(f, "{e}"),
            TrainError::Image(e) => write!(f, "{e}"),
            TrainError::Io { path, detail } => write!(f, "io error on {path}: {detail}"),
        }
    }
}

impl std::error::Error for TrainError {}

impl From<CoreError> for TrainError {
    fn from(e: CoreError) -> Self {
        TrainError::Core(e)
    }
}

impl From<ImageError> for TrainError {
    fn from(e: ImageError) -> Self {
        TrainError::Image(e)
    }
}

pub type Result<T> = std::result::Result<T, TrainError>;
