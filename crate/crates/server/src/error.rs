use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};

/// Error body: a stable machine-readable code and a human message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, code, message: message.into() }
    }

    pub fn unknown_config(name: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "unknown_config", format!("no configuration named {name:?}"))
    }

    pub fn unknown_session(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "unknown_session", format!("no session {id:?}"))
    }

    pub fn round_not_active(round_id: u32) -> Self {
        Self::new(StatusCode::CONFLICT, "round_not_active", format!("round {round_id} has not started"))
    }

    pub fn round_closed(round_id: u32) -> Self {
        Self::new(StatusCode::CONFLICT, "round_closed", format!("round {round_id} is closed"))
    }

    pub fn unknown_task(task_id: u32, round_id: u32) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "unknown_task", format!("task {task_id} is not assigned in round {round_id}"))
    }

    pub fn duplicate(task_id: u32) -> Self {
        Self::new(StatusCode::CONFLICT, "duplicate", format!("task {task_id} is already labelled"))
    }

    pub fn deadline(round_id: u32, late_ms: u64) -> Self {
        Self::new(StatusCode::CONFLICT, "deadline", format!("round {round_id} closed {late_ms} ms ago"))
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl std::error::Error for ApiError {}

impl From<refereval_microworld::MicroworldError> for ApiError {
    fn from(e: refereval_microworld::MicroworldError) -> Self {
        ApiError::internal(e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorBody { code: self.code.to_string(), message: self.message })).into_response()
    }
}
