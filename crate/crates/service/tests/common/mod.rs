#![allow(dead_code)]

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::Value;
use sudnli_service::schemas;
use tower::ServiceExt;

pub const TOY_GLOVE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/fixtures/toy_glove_50.txt");
pub const DAVIDSON: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/fixtures/davidson_25.csv");

pub async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = match body {
        Some(b) => req.body(Body::from(b.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()));
    (status, value)
}

pub async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    call(app, "GET", uri, None).await
}

pub async fn post(app: &Router, uri: &str, body: Value) -> (StatusCode, Value) {
    call(app, "POST", uri, Some(body)).await
}

/// Panics unless `instance` validates against the published schema `name`.
pub fn assert_valid(name: &str, instance: &Value) {
    let schema: Value = serde_json::from_str(schemas::schema(name).unwrap_or_else(|| panic!("no schema {name}"))).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap_or_else(|e| panic!("schema {name} does not compile: {e}"));
    let errors: Vec<String> = validator.iter_errors(instance).map(|e| format!("{} at {}", e, e.instance_path)).collect();
    assert!(errors.is_empty(), "{name} rejects {instance}:\n{}", errors.join("\n"));
}
