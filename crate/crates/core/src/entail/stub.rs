//! Deterministic model-free backend.
//!
//! Lookup order: exact `(premise, hypothesis)` table, then keyword rules, then
//! the default (a fixed score or a seeded hash of the pair).

use std::collections::HashMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BackendError, BackendInfo, EntailmentBackend, NliScore};
use crate::masking::tokenize;
use crate::scalar::Real;

/// Scores any premise containing `premise_token` (case-folded word match)
/// against a hypothesis containing `hypothesis_contains`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordRule {
    pub premise_token: String,
    pub hypothesis_contains: String,
    pub logits: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub enum StubDefault {
    Fixed(NliScore<f64>),
    /// Logits in [-4, 4) derived from SHA-256 of the seed and the pair.
    Hashed { seed: u64 },
}

#[derive(Debug, Clone)]
pub struct StubBackend {
    info: BackendInfo,
    table: HashMap<(String, String), NliScore<f64>>,
    keywords: Vec<KeywordRule>,
    default: StubDefault,
}

/// Table-or-default stub with id `stub`.
pub fn stub_backend(table: HashMap<(String, String), NliScore<f64>>, default: NliScore<f64>) -> StubBackend {
    StubBackend::new(BackendInfo::new("stub"), table, StubDefault::Fixed(default))
}

/// Logits for `(premise, hypothesis)` under `seed`: three little-endian u32
/// words from SHA-256(seed_le || premise || 0x1F || hypothesis), each mapped
/// to `-4 + 8 * w / 2^32`.
pub(crate) fn hashed_logits(seed: u64, premise: &str, hypothesis: &str) -> [f64; 3] {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(premise.as_bytes());
    h.update([0x1f]);
    h.update(hypothesis.as_bytes());
    let digest = h.finalize();
    let word = |i: usize| u32::from_le_bytes(digest[i * 4..i * 4 + 4].try_into().expect("4 bytes"));
    [0, 1, 2].map(|i| -4.0 + 8.0 * f64::from(word(i)) / 4_294_967_296.0)
}

impl StubBackend {
    pub fn new(info: BackendInfo, table: HashMap<(String, String), NliScore<f64>>, default: StubDefault) -> Self {
        Self { info, table, keywords: Vec::new(), default }
    }

    pub fn hashed(info: BackendInfo, seed: u64) -> Self {
        Self::new(info, HashMap::new(), StubDefault::Hashed { seed })
    }

    pub fn with_keyword_rules(mut self, rules: Vec<KeywordRule>) -> Self {
        self.keywords = rules;
        self
    }

    pub fn with_info(mut self, info: BackendInfo) -> Self {
        self.info = info;
        self
    }

    pub fn insert(&mut self, premise: impl Into<String>, hypothesis: impl Into<String>, score: NliScore<f64>) {
        self.table.insert((premise.into(), hypothesis.into()), score);
    }

    fn lookup(&self, premise: &str, hypothesis: &str) -> Result<NliScore<f64>, BackendError> {
        if let Some(s) = self.table.get(&(premise.to_string(), hypothesis.to_string())) {
            return Ok(*s);
        }
        if !self.keywords.is_empty() {
            let tokens = tokenize(premise);
            for rule in &self.keywords {
                let key = rule.premise_token.to_lowercase();
                if hypothesis.contains(&rule.hypothesis_contains) && tokens.iter().any(|t| t.key == key) {
                    return NliScore::from_logits(rule.logits);
                }
            }
        }
        match &self.default {
            StubDefault::Fixed(s) => Ok(*s),
            StubDefault::Hashed { seed } => NliScore::from_logits(hashed_logits(*seed, premise, hypothesis)),
        }
    }

    pub fn from_config(info: BackendInfo, config: &StubConfig) -> Result<Self, BackendError> {
        let default = match (&config.default, config.hash_seed) {
            (Some(_), Some(_)) => return Err(BackendError::Config("stub takes either default or hash_seed".into())),
            (Some([e, n, c]), None) => StubDefault::Fixed(NliScore::from_probabilities(*e, *n, *c)?),
            (None, Some(seed)) => StubDefault::Hashed { seed },
            (None, None) => StubDefault::Fixed(NliScore::uniform()),
        };
        let mut stub = Self::new(info, HashMap::new(), default).with_keyword_rules(config.keyword_rules.clone());
        for rule in &stub.keywords {
            NliScore::<f64>::from_logits(rule.logits)?;
        }
        if let Some(path) = &config.table {
            let text = std::fs::read_to_string(path)
                .map_err(|e| BackendError::Config(format!("reading stub table {}: {e}", path.display())))?;
            for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let entry: TableEntry = serde_json::from_str(line)
                    .map_err(|e| BackendError::Config(format!("stub table line {}: {e}", i + 1)))?;
                stub.insert(entry.premise, entry.hypothesis, entry.score);
            }
        }
        Ok(stub)
    }
}

impl<F: Real> EntailmentBackend<F> for StubBackend {
    fn info(&self) -> &BackendInfo {
        &self.info
    }

    fn score_batch(&self, pairs: &[(&str, &str)]) -> Result<Vec<NliScore<F>>, BackendError> {
        pairs.iter().map(|(p, h)| self.lookup(p, h).map(|s| s.cast())).collect()
    }
}

/// One line of a stub table file (JSONL).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableEntry {
    pub premise: String,
    pub hypothesis: String,
    #[serde(flatten)]
    pub score: NliScore<f64>,
}

/// Stub section of a backend config.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StubConfig {
    /// JSONL file of [`TableEntry`] lines.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub keyword_rules: Vec<KeywordRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hash_seed: Option<u64>,
    /// Fixed `[entailment, neutral, contradiction]` probabilities.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<[f64; 3]>,
}
