use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use concord_core::classifier::BackendError;
use concord_core::triage::TriageError;
use serde_json::json;

/// An error rendered as `{"error": {"code", "message"}}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> ApiError {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    pub fn bad_request(message: impl Into<String>) -> ApiError {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn not_found(code: &'static str, message: impl Into<String>) -> ApiError {
        ApiError::new(StatusCode::NOT_FOUND, code, message)
    }

    pub fn internal(message: impl Into<String>) -> ApiError {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"error": {"code": self.code, "message": self.message}});
        (self.status, Json(body)).into_response()
    }
}

impl From<TriageError> for ApiError {
    fn from(err: TriageError) -> ApiError {
        let message = err.to_string();
        let (status, code) = match &err {
            TriageError::UnknownPair(..) => (StatusCode::NOT_FOUND, "unknown_pair"),
            TriageError::MissingRevision(_) => (StatusCode::UNPROCESSABLE_ENTITY, "revision_required"),
            TriageError::UnexpectedRevision => (StatusCode::UNPROCESSABLE_ENTITY, "revision_not_allowed"),
            TriageError::Conflict { .. } => (StatusCode::CONFLICT, "revision_conflict"),
            TriageError::OpenDisagreements(_) => (StatusCode::CONFLICT, "open_disagreements"),
            TriageError::IdempotencyConflict(_) => (StatusCode::CONFLICT, "idempotency_conflict"),
            TriageError::Backend(BackendError::Rejected(_) | BackendError::Config(_)) => {
                (StatusCode::BAD_GATEWAY, "backend_rejected")
            }
            TriageError::Backend(_) => (StatusCode::BAD_GATEWAY, "backend_unavailable"),
            TriageError::Replay { .. } | TriageError::Ledger(_) => (StatusCode::INTERNAL_SERVER_ERROR, "ledger_error"),
            TriageError::Pairs(_) | TriageError::Eval(_) | TriageError::Corpus(_) => {
                (StatusCode::UNPROCESSABLE_ENTITY, "pipeline_error")
            }
        };
        ApiError::new(status, code, message)
    }
}
