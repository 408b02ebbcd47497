//! JSON error responses.

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use labelforge_core::Error as CoreError;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    pub details: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{status}: {message}")]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub details: Vec<String>,
}

pub type ApiResult<T> = Result<T, ApiError>;

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            details: Vec::new(),
        }
    }

    pub fn with_details(mut self, details: Vec<String>) -> Self {
        self.details = details;
        self
    }

    pub fn unauthenticated() -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "unauthenticated", "missing, invalid or expired session token")
    }

    pub fn forbidden() -> Self {
        Self::new(StatusCode::FORBIDDEN, "forbidden", "permission denied")
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn not_found(what: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("{what} not found"))
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> Self {
        use StatusCode as S;
        let message = e.to_string();
        match e {
            CoreError::InvalidConfig(list) => {
                ApiError::new(S::BAD_REQUEST, "invalid_config", "invalid project configuration")
                    .with_details(list)
            }
            CoreError::PermissionDenied => ApiError::forbidden(),
            CoreError::NotFound(what) => ApiError::not_found(what),
            CoreError::IllegalTransition { .. } => ApiError::new(S::CONFLICT, "illegal_transition", message),
            CoreError::Conflict(_) => ApiError::new(S::CONFLICT, "conflict", message),
            CoreError::BatchIncomplete => ApiError::new(S::CONFLICT, "batch_incomplete", message),
            CoreError::CorpusExhausted => ApiError::new(S::CONFLICT, "corpus_exhausted", message),
            CoreError::ModelUnavailable => ApiError::new(S::NOT_FOUND, "model_unavailable", message),
            CoreError::MissingTextColumn => ApiError::new(S::BAD_REQUEST, "missing_text_column", message),
            CoreError::Encoding(_) => ApiError::new(S::BAD_REQUEST, "encoding", message),
            CoreError::InvalidInput(_)
            | CoreError::EmptyVocabulary
            | CoreError::TooFewClasses
            | CoreError::DegenerateTrainingSet => ApiError::bad_request(message),
            CoreError::NoDoubleCodedItems => ApiError::new(S::NOT_FOUND, "no_double_coded_items", message),
            CoreError::DimensionMismatch { .. } | CoreError::RaggedRatings | CoreError::Archive(_) => {
                ApiError::internal(message)
            }
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            code: self.code.to_string(),
            message: self.message,
            details: self.details,
        };
        (self.status, Json(body)).into_response()
    }
}
