use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use riskclust::{PipelineError, ValidateError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("{0}")]
    BadRequest(String),
    #[error("{what} `{id}` not found")]
    NotFound { what: &'static str, id: String },
    #[error("expected revision {expected}, session is at {current}")]
    Conflict { expected: u64, current: u64 },
    #[error("artifact: {0}")]
    Artifact(#[from] PipelineError),
    #[error("{0}")]
    Validation(#[from] ValidateError),
    #[error("session log {path}: {source}")]
    Log {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt session log {path} line {line}: {message}")]
    CorruptLog { path: String, line: usize, message: String },
}

/// Wire format of every error response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub current_revision: Option<u64>,
}

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::NotFound { .. } => StatusCode::NOT_FOUND,
            ServiceError::Conflict { .. } => StatusCode::CONFLICT,
            ServiceError::Artifact(_) | ServiceError::Validation(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::Log { .. } | ServiceError::CorruptLog { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::BadRequest(_) => "bad_request",
            ServiceError::NotFound { .. } => "not_found",
            ServiceError::Conflict { .. } => "conflict",
            ServiceError::Artifact(_) => "invalid_artifact",
            ServiceError::Validation(ValidateError::InsufficientTags(_) | ValidateError::NoTags) => "insufficient_tags",
            ServiceError::Validation(ValidateError::InvalidTag(_)) => "invalid_tag",
            ServiceError::Validation(_) => "validation_failed",
            ServiceError::Log { .. } | ServiceError::CorruptLog { .. } => "storage",
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            code: self.code().into(),
            message: self.to_string(),
            current_revision: match self {
                ServiceError::Conflict { current, .. } => Some(current),
                _ => None,
            },
        };
        (self.status(), Json(body)).into_response()
    }
}
