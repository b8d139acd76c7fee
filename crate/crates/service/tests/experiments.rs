mod common;

use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::http::StatusCode;
use common::*;
use serde_json::{json, Value};
use sudnli::corpus::{write_jsonl, Corpus, DatasetSchema, TextRecord};
use sudnli::experiments::{Experiment, ExperimentSpec};
use sudnli_service::api::{ExperimentStatus, JobStatus};
use sudnli_service::{router, Session};

fn write_corpus(dir: &Path, id: &str, labels: &[&str], per_label: usize) -> String {
    let schema = DatasetSchema::canonical(id, labels.iter().map(|s| s.to_string()).collect()).unwrap();
    let records = labels
        .iter()
        .flat_map(|l| (0..per_label).map(move |i| (l, i)))
        .enumerate()
        .map(|(n, (l, i))| TextRecord { id: format!("{id}-{n}"), text: format!("post {i} about {l} things"), gold_label: l.to_string(), dataset_id: id.into() })
        .collect();
    let path = dir.join(format!("{id}.jsonl"));
    write_jsonl(&Corpus::new(schema, records).unwrap(), &path).unwrap();
    path.display().to_string()
}

fn spec(dir: &Path, output: &Path) -> Value {
    json!({
        "name": "service-run",
        "kind": "benchmark",
        "output": output.display().to_string(),
        "backends": ["hashed"],
        "templates": ["contains"],
        "backend": [{"id": "hashed", "adapter": "stub", "stub": {"hash_seed": 5}}],
        "datasets": [
            {"id": "alpha", "path": write_corpus(dir, "alpha", &["hate", "offensive", "neither"], 6)},
            {"id": "beta", "path": write_corpus(dir, "beta", &["hate", "neither"], 9)}
        ]
    })
}

async fn poll_until_done(app: &axum::Router, handle: &str) -> ExperimentStatus {
    let start = Instant::now();
    let mut seen: Vec<Value> = Vec::new();
    loop {
        let (s, body) = get(app, &format!("/experiments/{handle}")).await;
        assert_eq!(s, StatusCode::OK);
        assert_valid("experiment_status", &body);
        let cells = body["cells"].as_array().unwrap().clone();
        assert!(cells.len() >= seen.len() && cells[..seen.len()] == seen[..], "cell set shrank or changed");
        seen = cells;
        let status: ExperimentStatus = serde_json::from_value(body).unwrap();
        if matches!(status.status, JobStatus::Done | JobStatus::Failed) {
            return status;
        }
        assert!(start.elapsed() < Duration::from_secs(30), "experiment did not finish");
        std::thread::sleep(Duration::from_millis(10));
    }
}

#[tokio::test]
async fn submitted_run_matches_library_run() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(Arc::new(Session::default()));
    let req = json!({"spec": spec(dir.path(), &dir.path().join("svc"))});
    assert_valid("experiment_submit_request", &req);

    let (s, body) = post(&app, "/experiments", req.clone()).await;
    assert_eq!(s, StatusCode::ACCEPTED, "{body}");
    assert_valid("experiment_submit_response", &body);
    assert_eq!(body["created"], true);
    let handle = body["handle"].as_str().unwrap().to_string();

    let status = poll_until_done(&app, &handle).await;
    assert_eq!(status.status, JobStatus::Done, "{:?}", status.error);
    assert_eq!(status.cells.len(), 2);
    let table = status.table.unwrap();
    assert_eq!(table.rows, ["alpha", "beta"]);
    assert_eq!(table.columns, ["hashed"]);

    let local: ExperimentSpec = serde_json::from_value(spec(dir.path(), &dir.path().join("lib"))).unwrap();
    assert_eq!(local.fingerprint(), handle);
    let out = Experiment::new(local).run().unwrap();
    assert_eq!(table, out.table);
    assert_eq!(status.csv.unwrap(), out.table.to_csv());
    assert_eq!(status.markdown.unwrap(), out.table.to_markdown());

    let (s, again) = post(&app, "/experiments", req).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(again["handle"], handle.as_str());
    assert_eq!(again["created"], false);

    let (_, list) = get(&app, "/experiments").await;
    assert_valid("experiment_list", &list);
    assert_eq!(list["experiments"].as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn session_datasets_replace_spec_paths() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(Arc::new(Session::default()));
    let mut s = spec(dir.path(), &dir.path().join("out"));
    // ingest a different alpha, then point the spec at a file that does not exist
    let other = tempfile::tempdir().unwrap();
    let alpha = write_corpus(other.path(), "alpha", &["hate", "neither"], 2);
    let (code, _) = post(&app, "/datasets", json!({"path": alpha, "canonical": true})).await;
    assert_eq!(code, StatusCode::CREATED);
    s["datasets"][0]["path"] = json!("/nonexistent/alpha.jsonl");
    let (_, body) = post(&app, "/experiments", json!({"spec": s})).await;
    let status = poll_until_done(&app, body["handle"].as_str().unwrap()).await;
    assert_eq!(status.status, JobStatus::Done, "{:?}", status.error);
}

#[tokio::test]
async fn experiment_errors() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(Arc::new(Session::default()));
    let (s, body) = get(&app, "/experiments/0123456789abcdef").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_valid("error", &body);

    let mut bad = spec(dir.path(), dir.path());
    bad["datasets"] = json!([]);
    let (s, body) = post(&app, "/experiments", json!({"spec": bad})).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"]["code"], "invalid_spec");

    let mut bad = spec(dir.path(), dir.path());
    bad["backends"] = json!(["no-such-backend"]);
    let (s, _) = post(&app, "/experiments", json!({"spec": bad})).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);

    let (s, _) = post(&app, "/experiments", json!({"spec": {"name": "x"}})).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);

    // a spec whose dataset file is missing is accepted and then fails
    let mut missing = spec(dir.path(), dir.path());
    missing["datasets"][0]["path"] = json!("/nonexistent.jsonl");
    let (s, body) = post(&app, "/experiments", json!({"spec": missing.clone()})).await;
    assert_eq!(s, StatusCode::ACCEPTED);
    let status = poll_until_done(&app, body["handle"].as_str().unwrap()).await;
    assert_eq!(status.status, JobStatus::Failed);
    assert!(status.error.is_some());
    // failed runs are retried on resubmission
    let (_, body) = post(&app, "/experiments", json!({"spec": missing})).await;
    assert_eq!(body["created"], true);
}
