use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use ctxprobe_cli::server::{router, AppState};
use ctxprobe_core::probe::{Assignment, EditRegistry, ValidationPolicy};
use ctxprobe_core::{Dataset, Instance, Label, Split, Task};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn instance(id: &str, gold: Label) -> Instance {
    Instance {
        id: id.into(),
        task: Task::Nli,
        premise: format!("A dog runs in the park ({id})."),
        hypothesis: "An animal is outside.".into(),
        update: None,
        gold,
        split: Split::Test,
    }
}

fn app(analytics: &std::path::Path) -> Router {
    let ds = Dataset::new(
        "toy",
        Task::Nli,
        vec![instance("a", Label::Entailment), instance("b", Label::Neutral)],
    )
    .unwrap();
    let mut registry = EditRegistry::in_memory(ValidationPolicy::default());
    registry
        .add_assignments(
            &[
                Assignment {
                    instance_id: "a".into(),
                    original_label: Label::Entailment,
                    target_label: Label::Contradiction,
                },
                Assignment {
                    instance_id: "b".into(),
                    original_label: Label::Neutral,
                    target_label: Label::Entailment,
                },
            ],
            &ds,
        )
        .unwrap();
    router(AppState::new(registry, analytics.to_path_buf()))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Option<Value>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).ok())
}

fn has_key(v: &Value, key: &str) -> bool {
    match v {
        Value::Object(m) => m.contains_key(key) || m.values().any(|x| has_key(x, key)),
        Value::Array(a) => a.iter().any(|x| has_key(x, key)),
        _ => false,
    }
}

#[tokio::test]
async fn edit_and_validate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());

    let (s, item) = call(&app, "GET", "/edits/next?role=editor", None).await;
    assert_eq!(s, StatusCode::OK);
    let item = item.unwrap();
    assert_eq!(item["instance"]["id"], "a");
    assert_eq!(item["target_label"], "contradiction");
    assert_eq!(item["editable_field"], "premise");

    let unchanged = json!({
        "instance_id": "a",
        "target_label": "contradiction",
        "edited_text": item["instance"]["premise"],
        "editor_id": "ed",
    });
    let (s, body) = call(&app, "POST", "/edits", Some(unchanged)).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(body.unwrap()["error"].as_str().unwrap().contains("rejected"));

    let wrong_field = json!({
        "instance_id": "a", "target_label": "contradiction", "edited_text": "Nobody is outside.",
        "editor_id": "ed", "field": "hypothesis",
    });
    assert_eq!(call(&app, "POST", "/edits", Some(wrong_field)).await.0, StatusCode::UNPROCESSABLE_ENTITY);

    let edit = json!({
        "instance_id": "a",
        "target_label": "contradiction",
        "edited_text": "The park is empty and no animal is anywhere near it.",
        "editor_id": "ed",
    });
    let (s, created) = call(&app, "POST", "/edits", Some(edit)).await;
    assert_eq!(s, StatusCode::CREATED);
    let edit_id = created.unwrap()["edit_id"].as_str().unwrap().to_string();

    // The editor is never offered their own edit.
    assert_eq!(call(&app, "GET", "/edits/next?role=validator&annotator=ed", None).await.0, StatusCode::NO_CONTENT);

    let (s, task) = call(&app, "GET", "/edits/next?role=validator&annotator=v1", None).await;
    assert_eq!(s, StatusCode::OK);
    let task = task.unwrap();
    assert_eq!(task["edit_id"], edit_id.as_str());
    assert!(!has_key(&task, "original_label") && !has_key(&task, "target_label"));
    assert!(!has_key(&task, "status"));
    assert_eq!(task["choices"], json!(["entailment", "neutral", "contradiction"]));

    let uri = format!("/edits/{edit_id}/validations");
    let (s, resp) = call(&app, "POST", &uri, Some(json!({"annotator_id": "v1", "label": "contradiction"}))).await;
    assert_eq!(s, StatusCode::OK);
    let resp = resp.unwrap();
    assert_eq!(resp, json!({"edit_id": edit_id, "outcome": "recorded", "counts": true}));

    let (s, resp) = call(&app, "POST", &uri, Some(json!({"annotator_id": "v1", "label": "contradiction"}))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(resp.unwrap()["outcome"], "duplicate");
    let (s, _) = call(&app, "POST", &uri, Some(json!({"annotator_id": "v1", "label": "neutral"}))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (s, _) = call(&app, "POST", &uri, Some(json!({"annotator_id": "v2", "label": "weakener"}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, _) = call(&app, "POST", "/edits/edit-999999/validations", Some(json!({"annotator_id": "v1", "label": "neutral"}))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let (s, report) = call(&app, "GET", "/agreement?task=nli", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(report.unwrap()["n"], 1);
    assert_eq!(call(&app, "GET", "/agreement?task=dnli", None).await.0, StatusCode::UNPROCESSABLE_ENTITY);

    // The validated edit leaves the editor queue; the second assignment is next.
    let (_, item) = call(&app, "GET", "/edits/next?role=editor", None).await;
    assert_eq!(item.unwrap()["instance"]["id"], "b");
}

#[tokio::test]
async fn bad_queries_are_client_errors() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    assert_eq!(call(&app, "GET", "/edits/next?role=validator", None).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(call(&app, "GET", "/edits/next?role=admin", None).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(call(&app, "GET", "/agreement", None).await.0, StatusCode::NOT_FOUND);
    let (s, _) = call(&app, "POST", "/edits", Some(json!({"instance_id": "zzz", "target_label": "neutral", "edited_text": "x", "editor_id": "e"}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn analytics_files_are_served_by_name_only() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("snli.shift.json"), r#"{"points":[]}"#).unwrap();
    let app = app(dir.path());
    let (s, body) = call(&app, "GET", "/analytics/snli.shift", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body.unwrap(), json!({"points": []}));
    assert_eq!(call(&app, "GET", "/analytics/snli.shift.json", None).await.0, StatusCode::OK);
    assert_eq!(call(&app, "GET", "/analytics/missing", None).await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(&app, "GET", "/analytics/..%2F..%2Fetc", None).await.0, StatusCode::BAD_REQUEST);
}

#[test]
fn state_is_shareable() {
    fn assert_send_sync<T: Send + Sync>() {}
    assert_send_sync::<Arc<AppState>>();
}
