//! Reading, writing and storing run documents.

mod document;
mod store;

use thiserror::Error;

pub use document::{build_run, parse_run_document, DocumentInstance, RunDocument, FORMAT_VERSION};
pub use store::{RunStore, RunSummary};

use crate::model::ValidationError;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error("storage error at {path}: {message}")]
    Storage { path: String, message: String },
    #[error("run {0} not found")]
    NotFound(String),
}
