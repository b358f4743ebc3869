use thiserror::Error;

use crate::model::ValidationError;

/// Errors raised by metric, flow and table queries over a loaded run.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum QueryError {
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error("unknown instance {0:?}")]
    UnknownInstance(String),
    #[error("unknown class {0:?}")]
    UnknownClass(String),
    #[error("unknown bin {0:?}")]
    UnknownBin(String),
    #[error("transition from epoch {epoch} leaves the selected range")]
    InvalidTransition { epoch: usize },
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("invalid regular expression: {0}")]
    InvalidRegex(String),
    #[error("unknown attribute {0:?}")]
    UnknownAttribute(String),
    #[error("invalid table spec: {0}")]
    InvalidSpec(String),
}
