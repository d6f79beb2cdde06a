#![allow(dead_code)]

use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::Value;
use tempfile::TempDir;
use tower::ServiceExt;

use smart_suggest_core::provider::MockProvider;
use smart_suggest_core::{render_prompt, Inputs, PromptHash, TaskRegistry};
use smart_suggest_gateway::{build_service, router, GatewayConfig, ManualClock, ProviderKind, SuggestionService};

pub struct Harness {
    pub app: Router,
    pub service: Arc<SuggestionService>,
    pub mock: Arc<MockProvider>,
    pub clock: Arc<ManualClock>,
    pub dir: TempDir,
}

pub fn test_config(dir: &TempDir) -> GatewayConfig {
    let mut cfg = GatewayConfig {
        data_dir: dir.path().to_path_buf(),
        provider_kind: ProviderKind::Mock,
        sync_writes: false,
        rate_bucket: 1_000,
        rate_refill_per_s: 1_000.0,
        ..GatewayConfig::default()
    };
    cfg.provider.timeout = Duration::from_millis(100);
    cfg.provider.max_retries = 1;
    cfg.provider.retry_backoff = Duration::ZERO;
    cfg
}

pub fn harness_with(mock: MockProvider, tweak: impl FnOnce(&mut GatewayConfig)) -> Harness {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = test_config(&dir);
    tweak(&mut cfg);
    let mock = Arc::new(mock);
    let clock = Arc::new(ManualClock::new());
    let service = build_service(&cfg, mock.clone(), clock.clone()).unwrap();
    Harness {
        app: router(service.clone()),
        service,
        mock,
        clock,
        dir,
    }
}

pub fn harness(mock: MockProvider) -> Harness {
    harness_with(mock, |_| {})
}

pub fn inputs(pairs: &[(&str, Value)]) -> Inputs {
    pairs
        .iter()
        .map(|(k, v)| ((*k).to_owned(), serde_json::from_value(v.clone()).unwrap()))
        .collect()
}

pub fn prompt_hash(task_id: &str, inputs: &Inputs) -> PromptHash {
    let reg = TaskRegistry::with_builtins();
    render_prompt(reg.get_task(task_id).unwrap(), inputs, 3000)
        .unwrap()
        .prompt_hash
}

/// Sends a request and returns status plus the raw body text.
pub async fn call_raw(app: &Router, method: Method, uri: &str, body: Option<&str>) -> (StatusCode, String) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map(|b| Body::from(b.to_owned())).unwrap_or_else(Body::empty))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8_lossy(&bytes).into_owned())
}

pub async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let text = body.map(|b| b.to_string());
    let (status, raw) = call_raw(app, method, uri, text.as_deref()).await;
    let value = serde_json::from_str(&raw).unwrap_or_else(|e| panic!("non-JSON body ({e}): {raw}"));
    (status, value)
}

pub async fn create(app: &Router, task_id: &str, inputs: Value, client: &str) -> (StatusCode, Value) {
    call(
        app,
        Method::POST,
        "/api/suggestions",
        Some(serde_json::json!({ "task_id": task_id, "inputs": inputs, "client_id": client })),
    )
    .await
}

pub async fn regenerate(app: &Router, id: &str) -> (StatusCode, Value) {
    call(app, Method::POST, &format!("/api/suggestions/{id}/regenerate"), None).await
}

/// True when `v` is a well-formed error envelope.
pub fn is_envelope(v: &Value) -> bool {
    const KINDS: [&str; 6] = [
        "validation_failed",
        "unknown_task",
        "provider_unavailable",
        "malformed_response",
        "rate_limited",
        "internal",
    ];
    v["error_kind"].as_str().is_some_and(|k| KINDS.contains(&k))
        && v["message"].as_str().is_some_and(|m| !m.is_empty())
        && v["recoverable"].is_boolean()
        && (v.get("retry_hint").is_none() || v["retry_hint"].is_number())
}
