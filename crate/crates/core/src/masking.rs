//! Embedding-similarity token masking.
//!
//! Tokens of a premise that are close (cosine on static word vectors) to a
//! class name are replaced by a mask symbol, so a classifier has to rely on
//! the rest of the text.
//!
//! Tokenizer: split on Unicode whitespace; each piece keeps its leading and
//! trailing non-alphanumeric characters aside, and the remaining core,
//! lowercased, is the lookup key. A piece made only of punctuation has an empty
//! key and is never masked. Masking replaces the core only; detokenization
//! joins pieces with single spaces.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hypothesis::CandidateLabelSet;
use crate::scalar::Real;

pub const DEFAULT_TAU: f64 = 0.4;
pub const DEFAULT_MAX_FRACTION: f64 = 0.5;
pub const PREVIEW_MASK: &str = "[MASK]";

#[derive(Debug, Error)]
pub enum MaskingError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("no valid embedding lines in {0}")]
    Empty(String),
    #[error("invalid masking policy: {0}")]
    InvalidPolicy(String),
    #[error("vector for {token:?} has dimension {got}, table has {expected}")]
    Dimension { token: String, got: usize, expected: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub leading: String,
    pub core: String,
    pub trailing: String,
    /// Lowercased core; empty for punctuation-only pieces.
    pub key: String,
}

impl Token {
    pub fn surface(&self) -> String {
        format!("{}{}{}", self.leading, self.core, self.trailing)
    }
}

pub fn tokenize(text: &str) -> Vec<Token> {
    text.split_whitespace()
        .map(|piece| {
            let start = piece.find(char::is_alphanumeric);
            match start {
                None => Token { leading: piece.to_string(), core: String::new(), trailing: String::new(), key: String::new() },
                Some(s) => {
                    let end = piece
                        .char_indices()
                        .rev()
                        .find(|(_, c)| c.is_alphanumeric())
                        .map(|(i, c)| i + c.len_utf8())
                        .expect("has an alphanumeric char");
                    let core = &piece[s..end];
                    Token {
                        leading: piece[..s].to_string(),
                        core: core.to_string(),
                        trailing: piece[end..].to_string(),
                        key: core.to_lowercase(),
                    }
                }
            }
        })
        .collect()
}

/// Word vectors keyed by lowercased token.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable<F> {
    dimension: usize,
    vectors: HashMap<String, Vec<F>>,
}

impl<F: Real> EmbeddingTable<F> {
    pub fn new(dimension: usize) -> Self {
        Self { dimension, vectors: HashMap::new() }
    }

    /// Inserts a vector; the first vector for a case-folded token wins.
    pub fn insert(&mut self, token: &str, vector: Vec<F>) -> Result<(), MaskingError> {
        if vector.len() != self.dimension {
            return Err(MaskingError::Dimension { token: token.to_string(), got: vector.len(), expected: self.dimension });
        }
        self.vectors.entry(token.to_lowercase()).or_insert(vector);
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[F]> {
        self.vectors.get(&token.to_lowercase()).map(Vec::as_slice)
    }

    /// Mean of the in-vocabulary vectors of the phrase's tokens.
    pub fn phrase_vector(&self, phrase: &str) -> Option<Vec<F>> {
        let found: Vec<&[F]> = tokenize(phrase).iter().filter_map(|t| self.vectors.get(&t.key)).map(Vec::as_slice).collect();
        if found.is_empty() {
            return None;
        }
        let n = F::from_count(found.len());
        let mut mean = vec![F::zero(); self.dimension];
        for v in &found {
            for (m, x) in mean.iter_mut().zip(v.iter()) {
                *m = *m + *x;
            }
        }
        Some(mean.into_iter().map(|m| m / n).collect())
    }
}

#[derive(Debug, Clone)]
pub struct LoadedEmbeddings<F> {
    pub table: EmbeddingTable<F>,
    /// 1-based line numbers rejected for a wrong component count or bad number.
    pub rejected: Vec<usize>,
}

/// Reads GloVe text format: `token c1 c2 ... cd` per line. The first valid
/// line fixes the dimension.
pub fn load_embeddings<F: Real>(path: impl AsRef<Path>) -> Result<LoadedEmbeddings<F>, MaskingError> {
    let path = path.as_ref();
    let io = |source| MaskingError::Io { path: path.display().to_string(), source };
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let mut table: Option<EmbeddingTable<F>> = None;
    let mut rejected = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        let mut parts = line.split_whitespace();
        let Some(token) = parts.next() else { continue };
        let parsed: Result<Vec<F>, _> = parts.map(|p| p.parse::<f64>().map(F::lit)).collect();
        let Ok(vector) = parsed else {
            rejected.push(i + 1);
            continue;
        };
        if vector.is_empty() || vector.iter().any(|x| !x.is_finite()) {
            rejected.push(i + 1);
            continue;
        }
        let t = table.get_or_insert_with(|| EmbeddingTable::new(vector.len()));
        if t.insert(token, vector).is_err() {
            rejected.push(i + 1);
        }
    }
    match table {
        Some(table) => Ok(LoadedEmbeddings { table, rejected }),
        None => Err(MaskingError::Empty(path.display().to_string())),
    }
}

pub fn cosine<F: Real>(a: &[F], b: &[F]) -> Option<F> {
    let dot = a.iter().zip(b).fold(F::zero(), |s, (x, y)| s + *x * *y);
    let na = a.iter().fold(F::zero(), |s, x| s + *x * *x).sqrt();
    let nb = b.iter().fold(F::zero(), |s, x| s + *x * *x).sqrt();
    if na == F::zero() || nb == F::zero() {
        return None;
    }
    Some((dot / (na * nb)).max(-F::one()).min(F::one()))
}

/// Cosine between `token` and the mean vector of `label_phrase`; `None` when
/// either side is out of vocabulary.
pub fn similarity<F: Real>(table: &EmbeddingTable<F>, token: &str, label_phrase: &str) -> Option<F> {
    let label = table.phrase_vector(label_phrase)?;
    cosine(table.get(token)?, &label)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskingMode {
    Threshold,
    TopK,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskingPolicy<F> {
    pub mode: MaskingMode,
    pub tau: F,
    pub k: usize,
    pub max_fraction: F,
    pub mask_symbol: String,
}

impl<F: Real> Default for MaskingPolicy<F> {
    fn default() -> Self {
        Self {
            mode: MaskingMode::Threshold,
            tau: F::lit(DEFAULT_TAU),
            k: 1,
            max_fraction: F::lit(DEFAULT_MAX_FRACTION),
            mask_symbol: PREVIEW_MASK.to_string(),
        }
    }
}

impl<F: Real> MaskingPolicy<F> {
    pub fn threshold(tau: F) -> Self {
        Self { tau, ..Self::default() }
    }

    pub fn top_k(k: usize) -> Self {
        Self { mode: MaskingMode::TopK, k, ..Self::default() }
    }

    pub fn with_max_fraction(mut self, max_fraction: F) -> Self {
        self.max_fraction = max_fraction;
        self
    }

    pub fn with_mask_symbol(mut self, symbol: impl Into<String>) -> Self {
        self.mask_symbol = symbol.into();
        self
    }

    /// `tau` may exceed 1 (which disables threshold masking) but must not be NaN.
    pub fn validate(&self) -> Result<(), MaskingError> {
        if self.tau.is_nan() {
            return Err(MaskingError::InvalidPolicy("tau is NaN".into()));
        }
        if !(self.max_fraction > F::zero() && self.max_fraction <= F::one()) {
            return Err(MaskingError::InvalidPolicy(format!("max_fraction {} outside (0, 1]", self.max_fraction)));
        }
        if self.mask_symbol.split_whitespace().count() != 1 {
            return Err(MaskingError::InvalidPolicy("mask symbol must be a single token".into()));
        }
        Ok(())
    }

    /// Largest number of tokens that may be masked out of `n`.
    pub fn cap(&self, n: usize) -> usize {
        let raw = self.max_fraction.to_f64_lossy() * n as f64;
        // absorb representation error such as 0.3 * 10 = 3.0000000000000004
        ((raw - 1e-9).ceil().max(0.0) as usize).min(n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaskedText<F> {
    pub masked_text: String,
    /// Masked token indices, ascending.
    pub masked_positions: Vec<usize>,
    pub tokens: Vec<String>,
    /// Per-token similarity to the label phrase (`None` for OOV).
    pub similarities: Vec<Option<F>>,
}

/// Masks the tokens of `text` most similar to `label_phrase`.
pub fn mask_text<F: Real>(
    text: &str,
    label_phrase: &str,
    table: &EmbeddingTable<F>,
    policy: &MaskingPolicy<F>,
) -> Result<MaskedText<F>, MaskingError> {
    policy.validate()?;
    let tokens = tokenize(text);
    let label = table.phrase_vector(label_phrase);
    let similarities: Vec<Option<F>> = tokens
        .iter()
        .map(|t| {
            if t.key.is_empty() {
                return None;
            }
            let label = label.as_ref()?;
            cosine(table.vectors.get(&t.key)?, label)
        })
        .collect();

    let mut ranked: Vec<(usize, F)> = similarities.iter().enumerate().filter_map(|(i, s)| s.map(|s| (i, s))).collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite similarity").then(a.0.cmp(&b.0)));
    let qualifying: Vec<usize> = match policy.mode {
        MaskingMode::Threshold => ranked.iter().filter(|(_, s)| *s >= policy.tau).map(|(i, _)| *i).collect(),
        MaskingMode::TopK => ranked.iter().take(policy.k).map(|(i, _)| *i).collect(),
    };
    let mut masked_positions: Vec<usize> = qualifying.into_iter().take(policy.cap(tokens.len())).collect();
    masked_positions.sort_unstable();

    let pieces: Vec<String> = tokens
        .iter()
        .enumerate()
        .map(|(i, t)| {
            if masked_positions.binary_search(&i).is_ok() {
                format!("{}{}{}", t.leading, policy.mask_symbol, t.trailing)
            } else {
                t.surface()
            }
        })
        .collect();
    Ok(MaskedText {
        masked_text: pieces.join(" "),
        masked_positions,
        tokens: tokens.iter().map(Token::surface).collect(),
        similarities,
    })
}

/// One masked premise per candidate label, masking against the label's
/// surface form.
pub fn mask_for_labels<F: Real>(
    text: &str,
    labels: &CandidateLabelSet,
    table: &EmbeddingTable<F>,
    policy: &MaskingPolicy<F>,
) -> Result<Vec<MaskedText<F>>, MaskingError> {
    labels.labels().iter().map(|l| mask_text(text, labels.surface_form(l), table, policy)).collect()
}
