use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use epochflow_core::ingest::IngestError;
use epochflow_core::QueryError;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadRequest,
    NotFound,
    Unprocessable,
    Internal,
}

/// Error body returned by every endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    /// Location of the offending input (parameter name, document path or
    /// `line:column`), when known.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(skip)]
    status: Option<StatusCode>,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ApiError {
            code,
            message: message.into(),
            path: None,
            status: None,
        }
    }

    pub fn bad_request(param: &str, message: impl Into<String>) -> Self {
        ApiError::new(ErrorCode::BadRequest, message).at(param)
    }

    pub fn at(mut self, path: impl Into<String>) -> Self {
        self.path = Some(path.into());
        self
    }

    /// Overrides the status derived from the code.
    pub fn with_status(mut self, status: StatusCode) -> Self {
        self.status = Some(status);
        self
    }

    pub fn status(&self) -> StatusCode {
        self.status.unwrap_or(match self.code {
            ErrorCode::BadRequest => StatusCode::BAD_REQUEST,
            ErrorCode::NotFound => StatusCode::NOT_FOUND,
            ErrorCode::Unprocessable => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        })
    }
}

impl From<QueryError> for ApiError {
    fn from(err: QueryError) -> Self {
        let code = match err {
            QueryError::UnknownInstance(_) => ErrorCode::NotFound,
            _ => ErrorCode::Unprocessable,
        };
        ApiError::new(code, err.to_string())
    }
}

impl From<IngestError> for ApiError {
    fn from(err: IngestError) -> Self {
        let message = err.to_string();
        match err {
            IngestError::Parse { line, column, .. } => {
                ApiError::new(ErrorCode::Unprocessable, message).at(format!("{line}:{column}"))
            }
            IngestError::Schema { path, .. } => ApiError::new(ErrorCode::Unprocessable, message).at(path),
            IngestError::Validation(_) => ApiError::new(ErrorCode::Unprocessable, message),
            IngestError::NotFound(_) => ApiError::new(ErrorCode::NotFound, message),
            IngestError::Storage { .. } => {
                tracing::error!(%message, "storage failure");
                ApiError::new(ErrorCode::Internal, "storage failure")
            }
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status(), Json(self)).into_response()
    }
}
