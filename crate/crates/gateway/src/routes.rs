//! HTTP surface.
//!
//! Bodies are decoded by hand so malformed JSON also yields an envelope
//! rather than the framework's plain-text rejection.

use std::any::Any;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;
use tower_http::catch_panic::CatchPanicLayer;
use uuid::Uuid;

use crate::envelope::ErrorEnvelope;
use crate::service::{CreateRequest, EventRequest, FeedbackRequest, SuggestionService};

pub fn router(service: Arc<SuggestionService>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/api/tasks", get(list_tasks))
        .route("/api/suggestions", post(create_suggestion))
        .route("/api/suggestions/{id}/regenerate", post(regenerate))
        .route("/api/feedback", post(feedback))
        .route("/api/events", post(events))
        .route("/api/stats", get(stats))
        .fallback(not_found)
        .method_not_allowed_fallback(method_not_allowed)
        .layer(CatchPanicLayer::custom(panic_envelope))
        .with_state(service)
}

fn panic_envelope(_err: Box<dyn Any + Send + 'static>) -> Response {
    tracing::error!("request handler panicked");
    ErrorEnvelope::internal().into_response()
}

fn decode<T: DeserializeOwned>(body: &Bytes) -> Result<T, ErrorEnvelope> {
    serde_json::from_slice(body).map_err(|e| ErrorEnvelope::validation(format!("invalid request body: {e}")))
}

fn respond<T: serde::Serialize>(status: StatusCode, r: Result<T, ErrorEnvelope>) -> Response {
    match r {
        Ok(v) => (status, Json(v)).into_response(),
        Err(env) => env.into_response(),
    }
}

async fn healthz() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

async fn list_tasks(State(svc): State<Arc<SuggestionService>>) -> Response {
    (StatusCode::OK, Json(svc.list_tasks())).into_response()
}

async fn create_suggestion(State(svc): State<Arc<SuggestionService>>, body: Bytes) -> Response {
    let result = match decode::<CreateRequest>(&body) {
        Ok(req) => svc.create_suggestion(req).await,
        Err(env) => Err(env),
    };
    respond(StatusCode::OK, result)
}

async fn regenerate(State(svc): State<Arc<SuggestionService>>, Path(id): Path<String>) -> Response {
    let result = match Uuid::parse_str(&id) {
        Ok(id) => svc.regenerate(id).await,
        Err(_) => Err(ErrorEnvelope::validation("result id is not a valid identifier")),
    };
    respond(StatusCode::OK, result)
}

async fn feedback(State(svc): State<Arc<SuggestionService>>, body: Bytes) -> Response {
    let result = decode::<FeedbackRequest>(&body).and_then(|req| svc.record_feedback(req));
    respond(StatusCode::CREATED, result)
}

async fn events(State(svc): State<Arc<SuggestionService>>, body: Bytes) -> Response {
    let result = decode::<EventRequest>(&body).and_then(|req| svc.record_event(req));
    respond(StatusCode::CREATED, result)
}

#[derive(Debug, Deserialize)]
struct StatsQuery {
    task_id: Option<String>,
}

async fn stats(
    State(svc): State<Arc<SuggestionService>>,
    query: Result<Query<StatsQuery>, QueryRejection>,
) -> Response {
    match query {
        Ok(Query(StatsQuery { task_id: Some(id) })) => respond(StatusCode::OK, svc.stats(&id)),
        Ok(Query(StatsQuery { task_id: None })) => respond(StatusCode::OK, svc.all_stats()),
        Err(_) => ErrorEnvelope::validation("invalid query string").into_response(),
    }
}

async fn not_found() -> Response {
    let mut resp = ErrorEnvelope::validation("no such endpoint").into_response();
    *resp.status_mut() = StatusCode::NOT_FOUND;
    resp
}

async fn method_not_allowed() -> Response {
    let mut resp = ErrorEnvelope::validation("method not allowed on this endpoint").into_response();
    *resp.status_mut() = StatusCode::METHOD_NOT_ALLOWED;
    resp
}
