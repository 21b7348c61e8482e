use thiserror::Error;

/// Errors raised by pipeline operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {what} (expected {expected}, got {actual})")]
    ShapeMismatch {
        what: &'static str,
        expected: String,
        actual: String,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("no layers")]
    NoLayers,

    #[error("mixing needs at least 2 samples, got {0}")]
    BatchTooSmall(usize),

    #[error("non-finite gradient in {param} (loss terms: {losses})")]
    NonFiniteGradient { param: &'static str, losses: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Tensor(#[from] crate::io::tensor::TensorError),

    #[error("image: {0}")]
    Image(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(what: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::ShapeMismatch {
            what,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    /// True for errors caused by reading or writing files, as opposed to bad values.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Io(_) | Error::Tensor(_) | Error::Image(_) | Error::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
