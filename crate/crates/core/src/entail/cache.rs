//! Persistent content-addressed score cache.
//!
//! Layout under the cache root:
//!
//! ```text
//! <root>/<backend_id>/<key[0..2]>/<key>.json
//! key = hex(SHA-256(backend_id || "\n" || hex(SHA-256(premise)) || "\n" || hypothesis))
//! ```
//!
//! Each file holds one [`CacheEntry`]. Writes go to a temporary file in the
//! same directory and are renamed into place.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BackendError, BackendInfo, EntailmentBackend, NliScore, Readiness};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub backend_id: String,
    pub premise_sha256: String,
    pub hypothesis: String,
    /// `[entailment, neutral, contradiction]`.
    pub logits: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct ScoreCache {
    root: PathBuf,
}

fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

fn safe_component(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}

impl ScoreCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn key(backend_id: &str, premise: &str, hypothesis: &str) -> String {
        let mut h = Sha256::new();
        h.update(backend_id.as_bytes());
        h.update(b"\n");
        h.update(sha256_hex(premise.as_bytes()).as_bytes());
        h.update(b"\n");
        h.update(hypothesis.as_bytes());
        hex::encode(h.finalize())
    }

    pub fn path_for(&self, backend_id: &str, premise: &str, hypothesis: &str) -> PathBuf {
        let key = Self::key(backend_id, premise, hypothesis);
        self.root.join(safe_component(backend_id)).join(&key[..2]).join(format!("{key}.json"))
    }

    pub fn get(&self, backend_id: &str, premise: &str, hypothesis: &str) -> Option<[f64; 3]> {
        let text = std::fs::read_to_string(self.path_for(backend_id, premise, hypothesis)).ok()?;
        let entry: CacheEntry = serde_json::from_str(&text).ok()?;
        let matches = entry.backend_id == backend_id
            && entry.hypothesis == hypothesis
            && entry.premise_sha256 == sha256_hex(premise.as_bytes());
        matches.then_some(entry.logits)
    }

    pub fn put(&self, backend_id: &str, premise: &str, hypothesis: &str, logits: [f64; 3]) -> std::io::Result<()> {
        let path = self.path_for(backend_id, premise, hypothesis);
        let dir = path.parent().expect("cache path has a parent");
        std::fs::create_dir_all(dir)?;
        let entry = CacheEntry {
            backend_id: backend_id.to_string(),
            premise_sha256: sha256_hex(premise.as_bytes()),
            hypothesis: hypothesis.to_string(),
            logits,
        };
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(serde_json::to_string(&entry).expect("entry serializes").as_bytes())?;
        tmp.persist(&path).map_err(|e| e.error)?;
        Ok(())
    }
}

/// Wraps a backend with a [`ScoreCache`]; only misses reach the inner backend.
pub struct CachedBackend<F> {
    inner: Arc<dyn EntailmentBackend<F>>,
    cache: ScoreCache,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl<F: Real> CachedBackend<F> {
    pub fn new(inner: Arc<dyn EntailmentBackend<F>>, cache: ScoreCache) -> Self {
        Self { inner, cache, hits: AtomicU64::new(0), misses: AtomicU64::new(0) }
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    /// Share of looked-up pairs served from the cache (0 when nothing was looked up).
    pub fn hit_rate(&self) -> f64 {
        let (h, m) = (self.hits(), self.misses());
        if h + m == 0 {
            0.0
        } else {
            h as f64 / (h + m) as f64
        }
    }
}

impl<F: Real> EntailmentBackend<F> for CachedBackend<F> {
    fn info(&self) -> &BackendInfo {
        self.inner.info()
    }

    fn score_batch(&self, pairs: &[(&str, &str)]) -> Result<Vec<NliScore<F>>, BackendError> {
        let id = &self.inner.info().backend_id;
        let mut out: Vec<Option<NliScore<F>>> = Vec::with_capacity(pairs.len());
        let mut missing = Vec::new();
        for (i, (p, h)) in pairs.iter().enumerate() {
            match self.cache.get(id, p, h) {
                Some(logits) => out.push(Some(NliScore::from_logits(logits.map(F::lit))?)),
                None => {
                    out.push(None);
                    missing.push(i);
                }
            }
        }
        self.hits.fetch_add((pairs.len() - missing.len()) as u64, Ordering::Relaxed);
        self.misses.fetch_add(missing.len() as u64, Ordering::Relaxed);
        if !missing.is_empty() {
            let batch: Vec<(&str, &str)> = missing.iter().map(|&i| pairs[i]).collect();
            let scored = self.inner.score_batch(&batch)?;
            if scored.len() != batch.len() {
                return Err(BackendError::InvalidResponse("score count mismatch".into()));
            }
            for (&i, score) in missing.iter().zip(scored) {
                let (p, h) = pairs[i];
                let logits = score.logits.map(|l| l.to_f64_lossy());
                // cache failures only cost a rescore later
                let _ = self.cache.put(id, p, h, logits);
                out[i] = Some(NliScore::from_logits(logits.map(F::lit))?);
            }
        }
        Ok(out.into_iter().map(|s| s.expect("filled")).collect())
    }

    fn readiness(&self) -> Readiness {
        self.inner.readiness()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entail::StubBackend;

    #[test]
    fn round_trips_and_counts_hits() {
        let dir = tempfile::tempdir().unwrap();
        let inner: Arc<dyn EntailmentBackend<f64>> = Arc::new(StubBackend::hashed(BackendInfo::new("hb"), 3));
        let cached = CachedBackend::new(inner.clone(), ScoreCache::new(dir.path()));
        let first = cached.score_batch(&[("p", "h1"), ("p", "h2")]).unwrap();
        assert_eq!((cached.hits(), cached.misses()), (0, 2));
        let second = cached.score_batch(&[("p", "h2"), ("p", "h1"), ("q", "h1")]).unwrap();
        assert_eq!((cached.hits(), cached.misses()), (2, 3));
        assert_eq!(second[0], first[1]);
        assert_eq!(second[1], first[0]);
        assert_eq!(first, inner.score_batch(&[("p", "h1"), ("p", "h2")]).unwrap());
    }

    #[test]
    fn layout_is_content_addressed() {
        let cache = ScoreCache::new("/c");
        let key = ScoreCache::key("bart-large-mnli", "p", "h");
        assert_eq!(key.len(), 64);
        assert_eq!(
            cache.path_for("bart-large-mnli", "p", "h"),
            PathBuf::from(format!("/c/bart-large-mnli/{}/{key}.json", &key[..2]))
        );
        assert_ne!(key, ScoreCache::key("other", "p", "h"));
    }
}
