use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("{op}: shape mismatch, expected {expected} but got {got}")]
    ShapeMismatch {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("tensor data length {len} does not match shape {shape:?}")]
    BadTensor { shape: Vec<usize>, len: usize },

    #[error("backward called twice on the same tape without reset")]
    BackwardTwice,

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("missing gradient for parameter `{0}`")]
    MissingGrad(String),

    #[error("unknown parameter `{0}`")]
    UnknownParam(String),

    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),

    #[error("checkpoint format: {0}")]
    Format(String),
}

pub(crate) fn shape_err(op: &'static str, expected: impl Into<String>, got: &[usize]) -> NnError {
    NnError::ShapeMismatch {
        op,
        expected: expected.into(),
        got: format!("{got:?}"),
    }
}
