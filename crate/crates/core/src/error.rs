use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: expected {expected}, got {got}")]
    DimensionMismatch {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// A recursion produced NaN or infinity. Carries the tensor name and the step index.
    #[error("numerical instability in {tensor} at step {step}")]
    Instability { tensor: String, step: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("inconsistent tape: {0}")]
    InconsistentTape(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn dim_mismatch(op: &'static str, expected: impl ToString, got: impl ToString) -> Error {
    Error::DimensionMismatch {
        op,
        expected: expected.to_string(),
        got: got.to_string(),
    }
}
