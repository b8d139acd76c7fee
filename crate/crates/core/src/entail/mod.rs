//! Entailment scoring and zero-shot classification.
//!
//! Each candidate label is turned into a hypothesis, every (premise,
//! hypothesis) pair is scored by an [`EntailmentBackend`], and the per-pair
//! entailment scores are normalized into a [`ClassDistribution`].

mod cache;
mod config;
mod remote;
mod stub;

use std::borrow::Cow;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hypothesis::{CandidateLabelSet, HypothesisError, HypothesisTemplate};
use crate::scalar::{argmax_first, softmax, Real};

pub use cache::{CacheEntry, CachedBackend, ScoreCache};
pub use config::{build_backend, builtin_backends, AdapterKind, BackendConfig, BackendRegistry, DEFAULT_ENDPOINT, ENDPOINT_ENV};
pub use remote::{parse_score_response, RemoteBackend, ScoreRequest};
pub use stub::{stub_backend, KeywordRule, StubBackend, StubConfig, StubDefault, TableEntry};

/// Tolerance on the three NLI probabilities summing to one.
pub const SUM_TOLERANCE: f64 = 1e-6;

/// Entailment / neutral / contradiction probabilities for one pair, together
/// with the logits they came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NliScore<F> {
    pub entailment: F,
    pub neutral: F,
    pub contradiction: F,
    /// `[entailment, neutral, contradiction]` logits.
    pub logits: [F; 3],
}

#[derive(Deserialize)]
struct RawScore {
    #[serde(default)]
    logits: Option<[f64; 3]>,
    #[serde(default)]
    entailment: Option<f64>,
    #[serde(default)]
    neutral: Option<f64>,
    #[serde(default)]
    contradiction: Option<f64>,
}

impl<'de, F: Real> Deserialize<'de> for NliScore<F> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = RawScore::deserialize(d)?;
        raw.into_score().map_err(serde::de::Error::custom)
    }
}

impl RawScore {
    fn into_score<F: Real>(self) -> Result<NliScore<F>, BackendError> {
        match (self.logits, self.entailment, self.neutral, self.contradiction) {
            (Some(l), ..) => NliScore::from_logits(l.map(F::lit)),
            (None, Some(e), Some(n), Some(c)) => NliScore::from_probabilities(F::lit(e), F::lit(n), F::lit(c)),
            _ => Err(BackendError::InvalidScore("score needs logits or all three probabilities".into())),
        }
    }
}

impl<F: Real> NliScore<F> {
    /// Validates probabilities in [0, 1] summing to one within [`SUM_TOLERANCE`].
    /// Logits are taken as the natural log of each probability.
    pub fn from_probabilities(entailment: F, neutral: F, contradiction: F) -> Result<Self, BackendError> {
        let ps = [entailment, neutral, contradiction];
        if ps.iter().any(|p| !(*p >= F::zero() && *p <= F::one())) {
            return Err(BackendError::InvalidScore(format!("probability outside [0, 1]: {ps:?}")));
        }
        let sum = entailment + neutral + contradiction;
        if (sum - F::one()).abs() > F::lit(SUM_TOLERANCE) {
            return Err(BackendError::InvalidScore(format!("probabilities sum to {sum}")));
        }
        Ok(Self { entailment, neutral, contradiction, logits: ps.map(|p| p.ln()) })
    }

    pub fn from_logits(logits: [F; 3]) -> Result<Self, BackendError> {
        if logits.iter().any(|l| l.is_nan() || *l == F::infinity()) {
            return Err(BackendError::InvalidScore(format!("non-finite logits {logits:?}")));
        }
        let p = softmax(&logits);
        Ok(Self { entailment: p[0], neutral: p[1], contradiction: p[2], logits })
    }

    pub fn uniform() -> Self {
        Self::from_logits([F::zero(); 3]).expect("finite")
    }

    pub fn entailment_logit(&self) -> F {
        self.logits[0]
    }

    /// Entailment probability against contradiction only, ignoring neutral.
    pub fn entailment_vs_contradiction(&self) -> F {
        softmax(&[self.logits[2], self.logits[0]])[1]
    }

    pub fn cast<G: Real>(&self) -> NliScore<G> {
        let c = |x: F| G::lit(x.to_f64_lossy());
        NliScore {
            entailment: c(self.entailment),
            neutral: c(self.neutral),
            contradiction: c(self.contradiction),
            logits: self.logits.map(c),
        }
    }
}

/// How per-pair scores become a distribution over candidate labels.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationMode {
    /// Softmax of the entailment logits across candidates (single-label).
    #[default]
    CrossCandidate,
    /// Each pair scored independently as entailment vs contradiction
    /// (multi-label); the distribution is those scores divided by their sum.
    Independent,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruncationPolicy {
    /// Keep the leading premise tokens that fit the budget.
    #[default]
    Head,
    /// Reject over-long inputs.
    Disabled,
}

/// Static description of a backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendInfo {
    pub backend_id: String,
    /// Token budget for premise plus hypothesis, counted in whitespace tokens.
    pub max_premise_length: usize,
    pub mask_symbol: String,
    pub batch_size: usize,
    pub max_in_flight: usize,
    pub normalization: NormalizationMode,
    pub truncation: TruncationPolicy,
}

impl BackendInfo {
    pub fn new(backend_id: impl Into<String>) -> Self {
        Self {
            backend_id: backend_id.into(),
            max_premise_length: 512,
            mask_symbol: "[MASK]".into(),
            batch_size: 32,
            max_in_flight: 1,
            normalization: NormalizationMode::CrossCandidate,
            truncation: TruncationPolicy::Head,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readiness {
    Ready,
    Loading,
    Unavailable,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("backend {backend} unavailable: {reason}")]
    Unavailable { backend: String, reason: String },
    #[error("backend {0} is still loading")]
    Loading(String),
    #[error("input of {tokens} tokens exceeds the limit of {limit} with truncation disabled")]
    InputTooLong { tokens: usize, limit: usize },
    #[error("invalid score: {0}")]
    InvalidScore(String),
    #[error("invalid backend response: {0}")]
    InvalidResponse(String),
    #[error("invalid backend configuration: {0}")]
    Config(String),
}

#[derive(Debug, Error)]
pub enum EntailError {
    #[error("premise is empty")]
    EmptyPremise,
    #[error("hypothesis is empty")]
    EmptyHypothesis,
    #[error(transparent)]
    Hypothesis(#[from] HypothesisError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("{pairs} pairs given for {labels} labels")]
    PairCountMismatch { pairs: usize, labels: usize },
}

/// Anything able to score (premise, hypothesis) pairs. Scoring must be
/// deterministic, and scoring a batch must equal scoring each pair alone.
pub trait EntailmentBackend<F: Real>: Send + Sync {
    fn info(&self) -> &BackendInfo;

    fn score_batch(&self, pairs: &[(&str, &str)]) -> Result<Vec<NliScore<F>>, BackendError>;

    fn readiness(&self) -> Readiness {
        Readiness::Ready
    }
}

impl<F: Real, B: EntailmentBackend<F> + ?Sized> EntailmentBackend<F> for std::sync::Arc<B> {
    fn info(&self) -> &BackendInfo {
        (**self).info()
    }

    fn score_batch(&self, pairs: &[(&str, &str)]) -> Result<Vec<NliScore<F>>, BackendError> {
        (**self).score_batch(pairs)
    }

    fn readiness(&self) -> Readiness {
        (**self).readiness()
    }
}

/// Applies the backend's truncation policy so that premise and hypothesis fit
/// `max_premise_length` whitespace tokens. The hypothesis is never cut.
pub fn fit_premise<'a>(info: &BackendInfo, premise: &'a str, hypothesis: &str) -> Result<Cow<'a, str>, BackendError> {
    let hyp_tokens = hypothesis.split_whitespace().count();
    let budget = info.max_premise_length.saturating_sub(hyp_tokens);
    let tokens = premise.split_whitespace().count();
    if tokens <= budget {
        return Ok(Cow::Borrowed(premise));
    }
    match info.truncation {
        TruncationPolicy::Head if budget > 0 => {
            Ok(Cow::Owned(premise.split_whitespace().take(budget).collect::<Vec<_>>().join(" ")))
        }
        _ => Err(BackendError::InputTooLong { tokens: tokens + hyp_tokens, limit: info.max_premise_length }),
    }
}

fn check_pair(premise: &str, hypothesis: &str) -> Result<(), EntailError> {
    if premise.trim().is_empty() {
        return Err(EntailError::EmptyPremise);
    }
    if hypothesis.trim().is_empty() {
        return Err(EntailError::EmptyHypothesis);
    }
    Ok(())
}

/// Scores a single pair after truncation.
pub fn score_pair<F: Real, B: EntailmentBackend<F> + ?Sized>(
    backend: &B,
    premise: &str,
    hypothesis: &str,
) -> Result<NliScore<F>, EntailError> {
    check_pair(premise, hypothesis)?;
    let premise = fit_premise(backend.info(), premise, hypothesis)?;
    let mut scores = backend.score_batch(&[(&premise, hypothesis)])?;
    if scores.len() != 1 {
        return Err(BackendError::InvalidResponse(format!("expected 1 score, got {}", scores.len())).into());
    }
    Ok(scores.remove(0))
}

/// Normalized per-label probabilities for one premise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDistribution<F> {
    pub labels: Vec<String>,
    pub probabilities: Vec<F>,
    pub predicted: String,
    /// Entailment logits (cross-candidate) or per-pair entailment
    /// probabilities (independent), before normalization.
    pub raw_entailment: Vec<F>,
    pub normalization: NormalizationMode,
}

impl<F: Real> ClassDistribution<F> {
    /// Builds a distribution from per-label NLI scores.
    pub fn from_scores(
        labels: &[String],
        scores: &[NliScore<F>],
        mode: NormalizationMode,
    ) -> Result<Self, EntailError> {
        if labels.len() != scores.len() || labels.is_empty() {
            return Err(EntailError::PairCountMismatch { pairs: scores.len(), labels: labels.len() });
        }
        let (raw, probabilities) = match mode {
            NormalizationMode::CrossCandidate => {
                let raw: Vec<F> = scores.iter().map(NliScore::entailment_logit).collect();
                let p = softmax(&raw);
                (raw, p)
            }
            NormalizationMode::Independent => {
                let raw: Vec<F> = scores.iter().map(NliScore::entailment_vs_contradiction).collect();
                let total = raw.iter().fold(F::zero(), |a, b| a + *b);
                let p = if total > F::zero() {
                    raw.iter().map(|x| *x / total).collect()
                } else {
                    vec![F::one() / F::from_count(raw.len()); raw.len()]
                };
                (raw, p)
            }
        };
        Ok(Self::from_parts(labels.to_vec(), probabilities, raw, mode))
    }

    fn from_parts(labels: Vec<String>, probabilities: Vec<F>, raw_entailment: Vec<F>, normalization: NormalizationMode) -> Self {
        let best = argmax_first(&probabilities).expect("non-empty");
        Self { predicted: labels[best].clone(), labels, probabilities, raw_entailment, normalization }
    }

    pub fn probability(&self, label: &str) -> Option<F> {
        self.labels.iter().position(|l| l == label).map(|i| self.probabilities[i])
    }

    pub fn cast<G: Real>(&self) -> ClassDistribution<G> {
        let c = |x: &F| G::lit(x.to_f64_lossy());
        ClassDistribution {
            labels: self.labels.clone(),
            probabilities: self.probabilities.iter().map(c).collect(),
            predicted: self.predicted.clone(),
            raw_entailment: self.raw_entailment.iter().map(c).collect(),
            normalization: self.normalization,
        }
    }
}

/// Scores one prepared (premise, hypothesis) pair per label and normalizes.
/// Premises may differ per label (per-label masking).
pub fn classify_pairs<F: Real, B: EntailmentBackend<F> + ?Sized>(
    backend: &B,
    pairs: &[(String, String)],
    labels: &CandidateLabelSet,
    mode: NormalizationMode,
) -> Result<ClassDistribution<F>, EntailError> {
    if pairs.len() != labels.len() {
        return Err(EntailError::PairCountMismatch { pairs: pairs.len(), labels: labels.len() });
    }
    let info = backend.info();
    let mut fitted = Vec::with_capacity(pairs.len());
    for (p, h) in pairs {
        check_pair(p, h)?;
        fitted.push((fit_premise(info, p, h)?, h.as_str()));
    }
    let refs: Vec<(&str, &str)> = fitted.iter().map(|(p, h)| (p.as_ref(), *h)).collect();
    let mut scores = Vec::with_capacity(refs.len());
    for chunk in refs.chunks(info.batch_size.max(1)) {
        let got = backend.score_batch(chunk)?;
        if got.len() != chunk.len() {
            return Err(BackendError::InvalidResponse(format!("expected {} scores, got {}", chunk.len(), got.len())).into());
        }
        scores.extend(got);
    }
    ClassDistribution::from_scores(labels.labels(), &scores, mode)
}

/// Pairs `premise` with one hypothesis per label built from `template`.
pub fn hypothesis_pairs(
    premise: &str,
    template: &HypothesisTemplate,
    labels: &CandidateLabelSet,
) -> Result<Vec<(String, String)>, EntailError> {
    Ok(labels.hypotheses(template)?.into_iter().map(|h| (premise.to_string(), h)).collect())
}

/// Zero-shot classification of one premise using the backend's normalization mode.
pub fn classify<F: Real, B: EntailmentBackend<F> + ?Sized>(
    backend: &B,
    premise: &str,
    template: &HypothesisTemplate,
    labels: &CandidateLabelSet,
) -> Result<ClassDistribution<F>, EntailError> {
    classify_with_mode(backend, premise, template, labels, backend.info().normalization)
}

pub fn classify_with_mode<F: Real, B: EntailmentBackend<F> + ?Sized>(
    backend: &B,
    premise: &str,
    template: &HypothesisTemplate,
    labels: &CandidateLabelSet,
    mode: NormalizationMode,
) -> Result<ClassDistribution<F>, EntailError> {
    if premise.trim().is_empty() {
        return Err(EntailError::EmptyPremise);
    }
    let pairs = hypothesis_pairs(premise, template, labels)?;
    classify_pairs(backend, &pairs, labels, mode)
}

/// Batched [`classify`]: one result per premise, in order. A failing premise
/// does not stop the others.
pub fn classify_batch<F, B, S>(
    backend: &B,
    premises: &[S],
    template: &HypothesisTemplate,
    labels: &CandidateLabelSet,
) -> Vec<Result<ClassDistribution<F>, EntailError>>
where
    F: Real,
    B: EntailmentBackend<F> + ?Sized,
    S: AsRef<str> + Sync,
{
    let items: Vec<Result<Vec<(String, String)>, EntailError>> = premises
        .iter()
        .map(|p| {
            if p.as_ref().trim().is_empty() {
                Err(EntailError::EmptyPremise)
            } else {
                hypothesis_pairs(p.as_ref(), template, labels)
            }
        })
        .collect();
    classify_prepared_batch(backend, items, labels, backend.info().normalization)
}

/// Batch classification over already-built pair lists (one list per item).
/// Work is split into at most `max_in_flight` concurrent shards.
pub fn classify_prepared_batch<F, B>(
    backend: &B,
    items: Vec<Result<Vec<(String, String)>, EntailError>>,
    labels: &CandidateLabelSet,
    mode: NormalizationMode,
) -> Vec<Result<ClassDistribution<F>, EntailError>>
where
    F: Real,
    B: EntailmentBackend<F> + ?Sized,
{
    let workers = backend.info().max_in_flight.max(1).min(items.len().max(1));
    let run = |item: Result<Vec<(String, String)>, EntailError>| item.and_then(|pairs| classify_pairs(backend, &pairs, labels, mode));
    if workers <= 1 {
        return items.into_iter().map(run).collect();
    }
    let shard = items.len().div_ceil(workers);
    let mut shards: Vec<Vec<_>> = Vec::new();
    let mut it = items.into_iter().peekable();
    while it.peek().is_some() {
        shards.push(it.by_ref().take(shard).collect());
    }
    std::thread::scope(|s| {
        let handles: Vec<_> = shards
            .into_iter()
            .map(|chunk| s.spawn(move || chunk.into_iter().map(run).collect::<Vec<_>>()))
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("classification worker panicked")).collect()
    })
}
