use std::fmt;

use igkit_core::CoreError;

#[derive(Debug)]
pub enum ImageError {
    Io { path: String, detail: String },
    Decode(String),
    Unsupported(String),
    Dimension(String),
    Core(CoreError),
}

impl fmt::Display for ImageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ImageError::Io { path, detail } => write!(f, "io error on {path}: {detail}"),
            ImageError::Decode(s) => write!(f, "decode error: {s}"),
            ImageError::Unsupported(s) => write!(f, "unsupported image: {s}"),
            ImageError::Dimension(s) => write!(f, "dimension error: {s}"),
            ImageError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for ImageError {}

impl From<CoreError> for ImageError {
    fn from(e: CoreError) -> Self {
        ImageError::Core(e)
    }
}

pub type Result<T> = std::result::Result<T, ImageError>;
