use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use mindexam_core::session::SessionError;
use mindexam_core::store::DocumentError;
use serde_json::{json, Value};

/// Error body: `{"error": {"code", "message", "details"?}}`.
#[derive(Debug, Clone)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub details: Option<Value>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            details: None,
        }
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.details = Some(details);
        self
    }

    pub fn unauthenticated() -> Self {
        Self::new(
            StatusCode::UNAUTHORIZED,
            "unauthenticated",
            "missing or unknown bearer token",
        )
    }

    pub fn forbidden(message: impl Into<String>) -> Self {
        Self::new(StatusCode::FORBIDDEN, "forbidden", message)
    }

    pub fn invalid_body(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_body", message)
    }

    pub fn body(&self) -> Value {
        let mut err = json!({"code": self.code, "message": self.message});
        if let Some(d) = &self.details {
            err["details"] = d.clone();
        }
        json!({ "error": err })
    }
}

/// HTTP status for every engine error code.
pub fn status_for(err: &SessionError) -> StatusCode {
    use SessionError::*;
    match err {
        UnknownExam(_) | UnknownSession(_) | UnknownQuestion(_) => StatusCode::NOT_FOUND,
        NotEnrolled(_) => StatusCode::FORBIDDEN,
        ExamNotOpen | SessionExists(_) | ExamExists(_) | OrderViolation(_)
        | SequenceConflict(_) => StatusCode::CONFLICT,
        ExamClosed => StatusCode::GONE,
        UnknownTool(_)
        | ToolDisabled(_)
        | WrongToolKind { .. }
        | UnknownEvent(_)
        | WrongKind { .. }
        | LevelOutOfRange { .. }
        | Validation(_)
        | Document(_) => StatusCode::UNPROCESSABLE_ENTITY,
        CorruptTrace(_) | StorageFailure(_) => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl From<SessionError> for ApiError {
    fn from(err: SessionError) -> Self {
        let status = status_for(&err);
        let code = match &err {
            // a trace that no longer replays is a storage problem as far as clients are concerned
            SessionError::CorruptTrace(_) => "storage_failure",
            other => other.code(),
        };
        if status == StatusCode::INTERNAL_SERVER_ERROR {
            tracing::error!(error = %err, "request failed");
        }
        let details = match &err {
            SessionError::Validation(v) => Some(serde_json::to_value(&v.0).unwrap_or(Value::Null)),
            SessionError::SessionExists(id) => Some(json!({ "session_id": id })),
            SessionError::Document(DocumentError::SchemaViolation { line, .. }) => {
                Some(json!({ "line": line }))
            }
            SessionError::Document(DocumentError::InvariantViolation {
                line, invariant, ..
            }) => Some(json!({ "line": line, "invariant": invariant.as_str() })),
            _ => None,
        };
        ApiError {
            status,
            code,
            message: err.to_string(),
            details,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body())).into_response()
    }
}
