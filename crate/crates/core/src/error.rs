use alloc::string::String;

use crate::tensor::Shape;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left} vs {right}")]
    Shape {
        op: &'static str,
        left: Shape,
        right: Shape,
    },
    #[error("invalid configuration: {field}: {reason}")]
    Config { field: String, reason: String },
    #[error("invalid tower mask: {0}")]
    Mask(String),
    #[error("brute-force CTC instance too large: {0} label sequences")]
    TooLarge(u128),
    #[error("non-finite gradient in `{0}`")]
    NonFiniteGradient(String),
    #[error("training diverged at step {step}: loss is not finite")]
    Diverged { step: usize },
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn shape(op: &'static str, left: Shape, right: Shape) -> Self {
        Error::Shape { op, left, right }
    }
}
