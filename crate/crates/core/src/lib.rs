//! Zero-shot detection of socially unacceptable discourse with NLI models.
//!
//! Text is classified by pairing it (the premise) with one hypothesis per
//! candidate label, scoring each pair for entailment and normalizing the
//! entailment scores across labels. Around that core sit corpus ingestion,
//! hypothesis templates, embedding-based token masking, metrics, and an
//! experiment runner with a logistic-regression baseline.
//!
//! Numeric code is generic over the scalar type; the aliases below fix it to
//! `f64` (and to exact rationals for metrics).

pub mod corpus;
pub mod entail;
pub mod experiments;
pub mod hypothesis;
pub mod masking;
pub mod metrics;
pub mod scalar;

pub use scalar::{Real, Scalar};

/// Exact rational scalar for metric computations.
pub type Rational = num_rational::Ratio<i64>;

pub type NliScore = entail::NliScore<f64>;
pub type ClassDistribution = entail::ClassDistribution<f64>;
pub type EvalReport = metrics::EvalReport<f64>;
pub type ExactEvalReport = metrics::EvalReport<Rational>;
pub type ClassScores = metrics::ClassScores<f64>;
pub type EmbeddingTable = masking::EmbeddingTable<f64>;
pub type MaskingPolicy = masking::MaskingPolicy<f64>;
pub type MaskedText = masking::MaskedText<f64>;
pub type DynBackend = std::sync::Arc<dyn entail::EntailmentBackend<f64>>;
