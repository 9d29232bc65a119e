//! HTTP service for live microworld sessions.
//!
//! | method | path | body | reply |
//! |---|---|---|---|
//! | POST | `/sessions` | `{config, participant?}` | `{session_id, participant, total_rounds, practice_rounds}` |
//! | GET | `/sessions/{id}/rounds/next` | | round payload or `{complete: true}` |
//! | POST | `/sessions/{id}/rounds/{rid}/decisions` | `{task_id, label, client_ts?}` | `{round_id, task_id, timestamp_ms}` |
//! | POST | `/sessions/{id}/rounds/{rid}/complete` | | `{round_id, human_decisions, auto_resolved, closed_ms}` |
//! | GET | `/sessions/{id}/export` | | JSON-lines log; `?sidecar=truth` gives the schedule |
//!
//! Errors are `{code, message}`. Round payloads carry task attributes only:
//! no true state, automation leaf, posterior or policy ever leaves the
//! server except through the truth sidecar.

mod clock;
mod error;
mod session;

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;

pub use clock::{Clock, ManualClock, SystemClock};
pub use error::{ApiError, ErrorBody};
pub use session::{Ack, Created, DecisionRequest, NextRound, RoundPayload, RoundSummary, ServerConfig, SessionMeta, SessionStore, TaskView};

#[derive(Debug, Deserialize)]
struct CreateRequest {
    config: String,
    #[serde(default)]
    participant: Option<String>,
}

#[derive(Debug, Deserialize)]
struct ExportQuery {
    #[serde(default)]
    sidecar: Option<String>,
}

type AppState = Arc<SessionStore>;

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload.map(|Json(t)| t).map_err(|e| ApiError::bad_request(e.body_text()))
}

async fn create(State(store): State<AppState>, payload: Result<Json<CreateRequest>, JsonRejection>) -> Result<impl IntoResponse, ApiError> {
    let req = body(payload)?;
    Ok((StatusCode::CREATED, Json(store.create(&req.config, req.participant)?)))
}

async fn next_round(State(store): State<AppState>, Path(id): Path<String>) -> Result<Json<NextRound>, ApiError> {
    Ok(Json(store.next_round(&id)?))
}

async fn decide(State(store): State<AppState>, Path((id, round_id)): Path<(String, u32)>, payload: Result<Json<DecisionRequest>, JsonRejection>) -> Result<Json<Ack>, ApiError> {
    let req = body(payload)?;
    Ok(Json(store.decide(&id, round_id, &req)?))
}

async fn complete(State(store): State<AppState>, Path((id, round_id)): Path<(String, u32)>) -> Result<Json<RoundSummary>, ApiError> {
    Ok(Json(store.complete(&id, round_id)?))
}

async fn export(State(store): State<AppState>, Path(id): Path<String>, Query(q): Query<ExportQuery>) -> Result<impl IntoResponse, ApiError> {
    match q.sidecar.as_deref() {
        None => Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], store.export(&id)?)),
        Some("truth") => Ok(([(header::CONTENT_TYPE, "application/json")], store.truth(&id)?)),
        Some(other) => Err(ApiError::bad_request(format!("unknown sidecar {other:?}"))),
    }
}

pub fn router(store: Arc<SessionStore>) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}/rounds/next", get(next_round))
        .route("/sessions/{id}/rounds/{rid}/decisions", post(decide))
        .route("/sessions/{id}/rounds/{rid}/complete", post(complete))
        .route("/sessions/{id}/export", get(export))
        .with_state(store)
}
