//! HTTP client for a scoring endpoint.
//!
//! Wire format, `POST {endpoint}/score`:
//!
//! ```text
//! request:  {"model": "<checkpoint>", "pairs": [{"premise": "...", "hypothesis": "..."}]}
//! response: {"scores": [{"logits": [entailment, neutral, contradiction]}, ...]}
//! ```
//!
//! A score may instead carry `entailment`, `neutral` and `contradiction`
//! probabilities. `GET {endpoint}/healthz` answering 2xx means ready.

use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{BackendError, BackendInfo, EntailmentBackend, NliScore, RawScore, Readiness};
use crate::scalar::Real;

#[derive(Debug, Serialize)]
pub struct ScoreRequest<'a> {
    pub model: &'a str,
    pub pairs: Vec<PairBody<'a>>,
}

#[derive(Debug, Serialize)]
pub struct PairBody<'a> {
    pub premise: &'a str,
    pub hypothesis: &'a str,
}

#[derive(Deserialize)]
struct ScoreResponse {
    scores: Vec<RawScore>,
}

/// Parses a `/score` response body, checking the score count.
pub fn parse_score_response<F: Real>(body: &str, expected: usize) -> Result<Vec<NliScore<F>>, BackendError> {
    let resp: ScoreResponse =
        serde_json::from_str(body).map_err(|e| BackendError::InvalidResponse(e.to_string()))?;
    if resp.scores.len() != expected {
        return Err(BackendError::InvalidResponse(format!(
            "expected {expected} scores, got {}",
            resp.scores.len()
        )));
    }
    resp.scores.into_iter().map(RawScore::into_score).collect()
}

pub struct RemoteBackend {
    info: BackendInfo,
    endpoint: String,
    model: String,
    retries: u32,
    agent: ureq::Agent,
}

impl RemoteBackend {
    pub fn new(info: BackendInfo, endpoint: impl Into<String>, model: impl Into<String>, timeout: Duration, retries: u32) -> Self {
        let agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into();
        Self { info, endpoint: endpoint.into().trim_end_matches('/').to_string(), model: model.into(), retries, agent }
    }

    fn unavailable(&self, reason: impl Into<String>) -> BackendError {
        BackendError::Unavailable { backend: self.info.backend_id.clone(), reason: reason.into() }
    }

    fn post_once(&self, body: &ScoreRequest<'_>) -> Result<String, (bool, BackendError)> {
        let url = format!("{}/score", self.endpoint);
        match self.agent.post(&url).send_json(body) {
            Ok(mut resp) => resp
                .body_mut()
                .read_to_string()
                .map_err(|e| (true, self.unavailable(format!("reading response: {e}")))),
            // 4xx will not improve on retry
            Err(ureq::Error::StatusCode(code)) if (400..500).contains(&code) => {
                Err((false, BackendError::InvalidResponse(format!("endpoint returned HTTP {code}"))))
            }
            Err(ureq::Error::StatusCode(503)) => Err((true, BackendError::Loading(self.info.backend_id.clone()))),
            Err(e) => Err((true, self.unavailable(e.to_string()))),
        }
    }
}

impl<F: Real> EntailmentBackend<F> for RemoteBackend {
    fn info(&self) -> &BackendInfo {
        &self.info
    }

    fn score_batch(&self, pairs: &[(&str, &str)]) -> Result<Vec<NliScore<F>>, BackendError> {
        if pairs.is_empty() {
            return Ok(Vec::new());
        }
        let body = ScoreRequest {
            model: &self.model,
            pairs: pairs.iter().map(|(p, h)| PairBody { premise: p, hypothesis: h }).collect(),
        };
        let mut attempt = 0;
        loop {
            match self.post_once(&body) {
                Ok(text) => return parse_score_response(&text, pairs.len()),
                Err((retryable, err)) => {
                    if !retryable || attempt >= self.retries {
                        return Err(err);
                    }
                    thread::sleep(Duration::from_millis(200 << attempt.min(6)));
                    attempt += 1;
                }
            }
        }
    }

    fn readiness(&self) -> Readiness {
        match self.agent.get(format!("{}/healthz", self.endpoint)).call() {
            Ok(_) => Readiness::Ready,
            Err(ureq::Error::StatusCode(503)) => Readiness::Loading,
            Err(_) => Readiness::Unavailable,
        }
    }
}
