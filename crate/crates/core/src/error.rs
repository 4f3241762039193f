use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// Operand shapes do not satisfy the operation's contract.
    DimensionMismatch {
        op: &'static str,
        detail: String,
    },
    /// A non-shape argument is out of range or malformed.
    InvalidArgument {
        op: &'static str,
        detail: String,
    },
    Io {
        path: String,
        detail: String,
    },
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::DimensionMismatch { op, detail } => {
                write!(f, "{op}: dimension mismatch: {detail}")
            }
            CoreError::InvalidArgument { op, detail } => write!(f, "{op}: {detail}"),
            CoreError::Io { path, detail } => write!(f, "io error on {path}: {detail}"),
        }
    }
}

impl std::error::Error for CoreError {}

impl CoreError {
    pub fn dims(op: &'static str, detail: impl Into<String>) -> Self {
        CoreError::DimensionMismatch {
            op,
            detail: detail.into(),
        }
    }

    pub fn invalid(op: &'static str, detail: impl Into<String>) -> Self {
        CoreError::InvalidArgument {
            op,
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
