mod common;

use std::time::Duration;

use axum::http::{Method, StatusCode};
use serde_json::{json, Value};

use common::*;
use smart_suggest_core::catalog::builtin_tasks;
use smart_suggest_core::provider::{MockFallback, MockProvider, ProviderError, ScriptedOutcome};
use smart_suggest_core::store::EventKind;

fn predicates_inputs() -> Value {
    json!({ "predicates": ["has method", "has result"] })
}

#[tokio::test]
async fn healthz_does_not_touch_provider() {
    let h = harness(MockProvider::new(MockFallback::TransportError));
    let (status, body) = call(&h.app, Method::GET, "/healthz", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, json!({ "status": "ok" }));
    assert_eq!(h.mock.call_count(), 0);
}

#[tokio::test]
async fn task_listing_conceals_prompts() {
    let h = harness(MockProvider::new(MockFallback::Synthesize));
    let (status, raw) = call_raw(&h.app, Method::GET, "/api/tasks", None).await;
    assert_eq!(status, StatusCode::OK);
    let tasks: Vec<Value> = serde_json::from_str(&raw).unwrap();
    assert_eq!(tasks.len(), 8);
    for task in builtin_tasks() {
        assert!(!raw.contains(&task.system_prompt_template));
        // no 40-byte window of any system prompt leaks either
        let sys = task.system_prompt_template.as_bytes();
        for w in sys.windows(40) {
            assert!(!raw.contains(std::str::from_utf8(w).unwrap()));
        }
    }
    let rp = tasks.iter().find(|t| t["task_id"] == "related-predicates").unwrap();
    assert_eq!(rp["input_fields"][0]["name"], "predicates");
    assert_eq!(rp["input_fields"][0]["required"], true);
    assert_eq!(rp["max_suggestions"], 5);
    assert_eq!(rp["model_name"], "gpt-3.5-turbo");
    assert!(rp["disclaimer"].as_str().unwrap().contains("might be wrong"));
    assert!(rp.get("system_prompt_template").is_none());
}

#[tokio::test]
async fn create_returns_scripted_items() {
    let ins = inputs(&[("predicates", predicates_inputs()["predicates"].clone())]);
    let mock = MockProvider::new(MockFallback::TransportError).with_script(
        prompt_hash("related-predicates", &ins),
        vec![ScriptedOutcome::ToolCall(
            json!({"suggestions": ["has dataset", "has metric", "has baseline", "has code", "has license", "has venue"]}).to_string(),
        )],
    );
    let h = harness(mock);
    let (status, body) = create(&h.app, "related-predicates", predicates_inputs(), "c1").await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["items"].as_array().unwrap().len(), 5);
    assert_eq!(body["attempt"], 1);
    assert_eq!(body["category"], "closed_recommendation");
    assert!(body["notes"][0].as_str().unwrap().contains("truncated"));
    assert!(body.get("feedback_text").is_none());
}

#[tokio::test]
async fn repeated_create_hits_cache() {
    let h = harness(MockProvider::new(MockFallback::Synthesize));
    let (_, first) = create(&h.app, "related-predicates", predicates_inputs(), "c1").await;
    let (_, second) = create(&h.app, "related-predicates", predicates_inputs(), "c2").await;
    assert_eq!(first["result_id"], second["result_id"]);
    assert_eq!(h.mock.call_count(), 1);

    h.clock.advance(Duration::from_secs(31));
    let (_, third) = create(&h.app, "related-predicates", predicates_inputs(), "c1").await;
    assert_ne!(first["result_id"], third["result_id"]);
    assert_eq!(h.mock.call_count(), 2);

    let shown = h
        .service
        .store()
        .events()
        .unwrap()
        .iter()
        .filter(|e| e.kind == EventKind::Shown)
        .count();
    assert_eq!(shown, 3);
}

#[tokio::test]
async fn provider_timeout_degrades() {
    let h = harness(MockProvider::new(MockFallback::Fixed(ScriptedOutcome::Fail(
        ProviderError::Timeout,
    ))));
    let (status, body) = create(&h.app, "related-predicates", predicates_inputs(), "c1").await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert!(is_envelope(&body));
    assert_eq!(body["error_kind"], "provider_unavailable");
    assert_eq!(body["recoverable"], true);
    assert!(body["result_id"].is_string());
    // one attempt plus one retry
    assert_eq!(h.mock.call_count(), 2);
}

#[tokio::test]
async fn regenerate_returns_next_scripted_response() {
    let ins = inputs(&[("predicates", predicates_inputs()["predicates"].clone())]);
    let mock = MockProvider::new(MockFallback::TransportError).with_script(
        prompt_hash("related-predicates", &ins),
        vec![
            ScriptedOutcome::ToolCall(json!({"suggestions": ["first"]}).to_string()),
            ScriptedOutcome::ToolCall(json!({"suggestions": ["second"]}).to_string()),
        ],
    );
    let h = harness(mock);
    let (_, first) = create(&h.app, "related-predicates", predicates_inputs(), "c1").await;
    let id = first["result_id"].as_str().unwrap();
    let (status, second) = regenerate(&h.app, id).await;
    assert_eq!(status, StatusCode::OK, "{second}");
    assert_eq!(second["items"][0]["label"], "second");
    assert_eq!(second["attempt"], 2);
    assert_ne!(second["result_id"], first["result_id"]);
    assert_eq!(h.mock.call_count(), 2);

    let regenerated = h
        .service
        .store()
        .events()
        .unwrap()
        .iter()
        .filter(|e| e.kind == EventKind::Regenerated)
        .count();
    assert_eq!(regenerated, 1);

    // the cache now serves the regenerated result
    let (_, again) = create(&h.app, "related-predicates", predicates_inputs(), "c1").await;
    assert_eq!(again["result_id"], second["result_id"]);
}

#[tokio::test]
async fn regenerate_recovers_from_malformed_response() {
    let ins = inputs(&[("label", json!("population in Berlin"))]);
    let mock = MockProvider::new(MockFallback::TransportError).with_script(
        prompt_hash("predicate-reusability", &ins),
        vec![
            ScriptedOutcome::ToolCall("{\"feedback\": ".into()),
            ScriptedOutcome::ToolCall(json!({"feedback": "It could be made more generic."}).to_string()),
        ],
    );
    let h = harness(mock);
    let (status, env) = create(&h.app, "predicate-reusability", json!({"label": "population in Berlin"}), "c1").await;
    assert_eq!(status, StatusCode::BAD_GATEWAY);
    assert_eq!(env["error_kind"], "malformed_response");
    assert_eq!(env["recoverable"], true);
    let (status, ok) = regenerate(&h.app, env["result_id"].as_str().unwrap()).await;
    assert_eq!(status, StatusCode::OK, "{ok}");
    assert_eq!(ok["feedback_text"], "It could be made more generic.");
    assert_eq!(ok["attempt"], 2);
}

#[tokio::test]
async fn regenerate_unknown_or_expired() {
    let h = harness(MockProvider::new(MockFallback::Synthesize));
    let (status, env) = regenerate(&h.app, "00000000-0000-4000-8000-000000000000").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(env["error_kind"], "validation_failed");
    assert_eq!(env["recoverable"], false);

    let (_, first) = create(&h.app, "related-predicates", predicates_inputs(), "c1").await;
    h.clock.advance(Duration::from_secs(301));
    let (_, env) = regenerate(&h.app, first["result_id"].as_str().unwrap()).await;
    assert_eq!(env["error_kind"], "validation_failed");

    let (_, env) = regenerate(&h.app, "not-a-uuid").await;
    assert_eq!(env["error_kind"], "validation_failed");
}

#[tokio::test]
async fn validation_and_unknown_task() {
    let h = harness(MockProvider::new(MockFallback::Synthesize));
    let (status, env) = create(&h.app, "related-objects-research-problem", json!({}), "c1").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(env["error_kind"], "validation_failed");
    assert!(env["message"].as_str().unwrap().contains("title"));

    let (status, env) = create(&h.app, "nonexistent", json!({}), "c1").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(env["error_kind"], "unknown_task");

    let (status, env) = call(&h.app, Method::POST, "/api/suggestions", Some(json!({"task_id": 3}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(is_envelope(&env));
    assert_eq!(h.mock.call_count(), 0);
}

#[tokio::test]
async fn rate_limit_envelope() {
    let h = harness_with(MockProvider::new(MockFallback::Synthesize), |c| {
        c.rate_bucket = 2;
        c.rate_refill_per_s = 0.5;
    });
    for _ in 0..2 {
        let (status, _) = create(&h.app, "related-predicates", predicates_inputs(), "c1").await;
        assert_eq!(status, StatusCode::OK);
    }
    let (status, env) = create(&h.app, "related-predicates", predicates_inputs(), "c1").await;
    assert_eq!(status, StatusCode::TOO_MANY_REQUESTS);
    assert_eq!(env["error_kind"], "rate_limited");
    assert_eq!(env["retry_hint"], 2.0);
    let (status, _) = create(&h.app, "related-predicates", predicates_inputs(), "c2").await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn feedback_and_events_flow_into_stats() {
    let h = harness(MockProvider::new(MockFallback::Synthesize));
    let (_, r) = create(&h.app, "related-predicates", predicates_inputs(), "c1").await;
    let id = r["result_id"].as_str().unwrap();

    let (status, ack) = call(
        &h.app,
        Method::POST,
        "/api/feedback",
        Some(json!({"result_id": id, "level": "positive", "helpful": "yes", "correct": true})),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(ack["orphan"], false);

    let (status, _) = call(
        &h.app,
        Method::POST,
        "/api/events",
        Some(json!({"result_id": id, "kind": "accepted", "item_index": 2})),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);
    let (status, env) = call(
        &h.app,
        Method::POST,
        "/api/events",
        Some(json!({"result_id": id, "kind": "accepted", "item_index": 9})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(env["error_kind"], "validation_failed");

    let (status, env) = call(
        &h.app,
        Method::POST,
        "/api/feedback",
        Some(json!({"result_id": id, "level": "neutral", "free_text": "x".repeat(2001)})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(is_envelope(&env));

    let (status, stats) = call(&h.app, Method::GET, "/api/stats?task_id=related-predicates", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(stats["shown_count"], 1);
    assert_eq!(stats["accepted_count"], 1);
    assert_eq!(stats["acceptance_rate"], 1.0);
    assert_eq!(stats["feedback_counts"], json!({"positive": 1, "neutral": 0, "negative": 0}));

    let (status, all) = call(&h.app, Method::GET, "/api/stats", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(all.as_array().unwrap().len(), 8);

    let (status, env) = call(&h.app, Method::GET, "/api/stats?task_id=nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(env["error_kind"], "unknown_task");

    let fb = h.service.store().feedback_records().unwrap();
    assert_eq!(fb.len(), 1);
    assert_eq!(serde_json::to_value(fb[0].correct).unwrap(), "yes");
}

#[tokio::test]
async fn orphan_feedback_is_accepted() {
    let h = harness(MockProvider::new(MockFallback::Synthesize));
    let (status, ack) = call(
        &h.app,
        Method::POST,
        "/api/feedback",
        Some(json!({"result_id": "00000000-0000-4000-8000-000000000001", "level": "negative"})),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(ack["orphan"], true);
}

#[tokio::test]
async fn unknown_routes_and_methods_get_envelopes() {
    let h = harness(MockProvider::new(MockFallback::Synthesize));
    let (status, env) = call(&h.app, Method::GET, "/api/nothing", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(is_envelope(&env));
    let (status, env) = call(&h.app, Method::DELETE, "/api/tasks", None).await;
    assert_eq!(status, StatusCode::METHOD_NOT_ALLOWED);
    assert!(is_envelope(&env));
}

#[tokio::test]
async fn stats_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    let before = {
        let h = harness_with(MockProvider::new(MockFallback::Synthesize), |c| c.data_dir = dir.path().into());
        let (_, r) = create(&h.app, "related-objects-method", json!({"title": "Graph nets"}), "c").await;
        let id = r["result_id"].as_str().unwrap();
        call(&h.app, Method::POST, "/api/events", Some(json!({"result_id": id, "kind": "dismissed"}))).await;
        call(&h.app, Method::GET, "/api/stats?task_id=related-objects-method", None).await.1
    };
    let h = harness_with(MockProvider::new(MockFallback::Synthesize), |c| c.data_dir = dir.path().into());
    let after = call(&h.app, Method::GET, "/api/stats?task_id=related-objects-method", None).await.1;
    assert_eq!(before, after);
    assert_eq!(after["shown_count"], 1);
    assert_eq!(after["dismissed_count"], 1);
}

#[tokio::test]
async fn serves_over_tcp() {
    let h = harness(MockProvider::new(MockFallback::Synthesize));
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let app = h.app.clone();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });

    let mut stream = tokio::net::TcpStream::connect(addr).await.unwrap();
    use tokio::io::{AsyncReadExt, AsyncWriteExt};
    stream
        .write_all(b"GET /healthz HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n")
        .await
        .unwrap();
    let mut buf = String::new();
    stream.read_to_string(&mut buf).await.unwrap();
    assert!(buf.starts_with("HTTP/1.1 200"));
    assert!(buf.ends_with("{\"status\":\"ok\"}"));
}
