//! Supervised baselines: term-count vectorization and multinomial logistic
//! regression.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::corpus::{Corpus, SplitConfig};
use crate::masking::tokenize;
use crate::scalar::{argmax_first, softmax, Real};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LrBaselineConfig {
    pub vocabulary_cap: usize,
    /// Inverse L2 strength: the penalty is `||W||^2 / (2 C n)` on the mean loss.
    pub regularization: f64,
    pub max_iterations: usize,
    /// Stop once the gradient's max-norm falls below this.
    pub tolerance: f64,
    pub split: SplitConfig,
}

impl Default for LrBaselineConfig {
    fn default() -> Self {
        Self {
            vocabulary_cap: 20_000,
            regularization: 1.0,
            max_iterations: 1_000,
            tolerance: 1e-6,
            split: SplitConfig::default(),
        }
    }
}

/// Lowercased word tokens used for vectorization (punctuation-only pieces dropped).
pub fn word_keys(text: &str) -> Vec<String> {
    tokenize(text).into_iter().map(|t| t.key).filter(|k| !k.is_empty()).collect()
}

/// Sparse document-term counts.
#[derive(Debug, Clone, PartialEq)]
pub struct DocumentTermMatrix<F> {
    pub vocabulary: Vec<String>,
    /// Per document, `(term index, count)` sorted by term index.
    pub rows: Vec<Vec<(usize, F)>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vectorizer {
    vocabulary: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vectorizer {
    /// Keeps the `cap` most frequent terms; equal counts are ordered
    /// lexicographically.
    pub fn fit<S: AsRef<str>>(texts: &[S], cap: usize) -> Self {
        let mut freq: HashMap<String, usize> = HashMap::new();
        for t in texts {
            for k in word_keys(t.as_ref()) {
                *freq.entry(k).or_default() += 1;
            }
        }
        let mut terms: Vec<(String, usize)> = freq.into_iter().collect();
        terms.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        terms.truncate(cap);
        let vocabulary: Vec<String> = terms.into_iter().map(|(t, _)| t).collect();
        let index = vocabulary.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { vocabulary, index }
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn transform_one<F: Real>(&self, text: &str) -> Vec<(usize, F)> {
        let mut counts: HashMap<usize, usize> = HashMap::new();
        for k in word_keys(text) {
            if let Some(&i) = self.index.get(&k) {
                *counts.entry(i).or_default() += 1;
            }
        }
        let mut row: Vec<(usize, F)> = counts.into_iter().map(|(i, c)| (i, F::from_count(c))).collect();
        row.sort_unstable_by_key(|(i, _)| *i);
        row
    }

    pub fn transform<F: Real, S: AsRef<str>>(&self, texts: &[S]) -> DocumentTermMatrix<F> {
        DocumentTermMatrix {
            vocabulary: self.vocabulary.clone(),
            rows: texts.iter().map(|t| self.transform_one(t.as_ref())).collect(),
        }
    }
}

/// Fits a vocabulary on `texts` and returns their count matrix.
pub fn vectorize<F: Real, S: AsRef<str>>(texts: &[S], config: &LrBaselineConfig) -> DocumentTermMatrix<F> {
    Vectorizer::fit(texts, config.vocabulary_cap.max(1)).transform(texts)
}

/// Multinomial logistic regression over term counts.
#[derive(Debug, Clone)]
pub struct LogisticRegression<F> {
    labels: Vec<String>,
    vectorizer: Vectorizer,
    /// `classes x features`.
    weights: Vec<Vec<F>>,
    bias: Vec<F>,
    iterations: usize,
}

impl<F: Real> LogisticRegression<F> {
    /// Trains with Nesterov-accelerated full-batch gradient descent from zero
    /// weights, so the result is deterministic.
    pub fn train(train: &Corpus, config: &LrBaselineConfig) -> Result<Self, ExperimentError> {
        let labels: Vec<String> = train.label_set().to_vec();
        let y: Vec<usize> = train
            .records()
            .iter()
            .map(|r| labels.iter().position(|l| *l == r.gold_label).expect("corpus invariant"))
            .collect();
        let present = labels.iter().enumerate().filter(|(i, _)| y.contains(i)).count();
        if present < 2 {
            return Err(ExperimentError::SingleClass(train.dataset_id().to_string()));
        }
        if config.regularization <= 0.0 {
            return Err(ExperimentError::InvalidSpec("regularization must be positive".into()));
        }
        let texts = train.texts();
        let vectorizer = Vectorizer::fit(&texts, config.vocabulary_cap.max(1));
        let x: Vec<Vec<(usize, F)>> = texts.iter().map(|t| vectorizer.transform_one(t)).collect();
        let (k, d, n) = (labels.len(), vectorizer.vocabulary.len(), x.len());
        let nf = F::from_count(n);
        let lambda = F::one() / (F::lit(config.regularization) * nf);
        let max_sq = x
            .iter()
            .map(|row| row.iter().fold(F::one(), |s, (_, v)| s + *v * *v))
            .fold(F::zero(), |a, b| a.max(b));
        let step = F::one() / (F::lit(0.5) * max_sq + lambda);

        let zeros = || (vec![vec![F::zero(); d]; k], vec![F::zero(); k]);
        let (mut w, mut b) = zeros();
        let (mut w_prev, mut b_prev) = zeros();
        let mut t_prev = F::one();
        let mut iterations = 0;
        for it in 0..config.max_iterations {
            iterations = it + 1;
            // look-ahead point
            let t = (F::one() + (F::one() + F::lit(4.0) * t_prev * t_prev).sqrt()) / F::lit(2.0);
            let mom = (t_prev - F::one()) / t;
            let wy: Vec<Vec<F>> = (0..k)
                .map(|c| (0..d).map(|j| w[c][j] + mom * (w[c][j] - w_prev[c][j])).collect())
                .collect();
            let by: Vec<F> = (0..k).map(|c| b[c] + mom * (b[c] - b_prev[c])).collect();

            let (mut gw, mut gb) = zeros();
            for (row, &target) in x.iter().zip(&y) {
                let logits: Vec<F> = (0..k)
                    .map(|c| row.iter().fold(by[c], |s, (j, v)| s + wy[c][*j] * *v))
                    .collect();
                let p = softmax(&logits);
                for c in 0..k {
                    let r = (p[c] - if c == target { F::one() } else { F::zero() }) / nf;
                    gb[c] = gb[c] + r;
                    for (j, v) in row {
                        gw[c][*j] = gw[c][*j] + r * *v;
                    }
                }
            }
            let mut gmax = F::zero();
            for c in 0..k {
                for j in 0..d {
                    gw[c][j] = gw[c][j] + lambda * wy[c][j];
                    gmax = gmax.max(gw[c][j].abs());
                }
                gmax = gmax.max(gb[c].abs());
            }
            w_prev = std::mem::replace(
                &mut w,
                (0..k).map(|c| (0..d).map(|j| wy[c][j] - step * gw[c][j]).collect()).collect(),
            );
            b_prev = std::mem::replace(&mut b, (0..k).map(|c| by[c] - step * gb[c]).collect());
            t_prev = t;
            if gmax < F::lit(config.tolerance) {
                break;
            }
        }
        Ok(Self { labels, vectorizer, weights: w, bias: b, iterations })
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn probabilities(&self, text: &str) -> Vec<F> {
        let row = self.vectorizer.transform_one::<F>(text);
        let logits: Vec<F> = self
            .weights
            .iter()
            .zip(&self.bias)
            .map(|(wc, bc)| row.iter().fold(*bc, |s, (j, v)| s + wc[*j] * *v))
            .collect();
        softmax(&logits)
    }

    /// Most probable label; ties go to the earlier label.
    pub fn predict_one(&self, text: &str) -> String {
        let p = self.probabilities(text);
        self.labels[argmax_first(&p).expect("at least two labels")].clone()
    }

    pub fn predict<S: AsRef<str>>(&self, texts: &[S]) -> Vec<String> {
        texts.iter().map(|t| self.predict_one(t.as_ref())).collect()
    }
}

/// Train-then-predict text classifier used for supervised table columns.
pub trait TextClassifier: Send + Sync {
    fn predict(&self, texts: &[&str]) -> Vec<String>;
}

/// A supervised baseline column. The fine-tuned masked-language-model column
/// is an implementation of this trait supplied by the caller; only logistic
/// regression ships in this crate.
pub trait SupervisedBaseline: Send + Sync {
    fn name(&self) -> &str;
    fn fit(&self, train: &Corpus) -> Result<Box<dyn TextClassifier>, ExperimentError>;
}

impl TextClassifier for LogisticRegression<f64> {
    fn predict(&self, texts: &[&str]) -> Vec<String> {
        LogisticRegression::predict(self, texts)
    }
}

pub struct LrBaseline {
    pub config: LrBaselineConfig,
}

impl SupervisedBaseline for LrBaseline {
    fn name(&self) -> &str {
        "LR"
    }

    fn fit(&self, train: &Corpus) -> Result<Box<dyn TextClassifier>, ExperimentError> {
        Ok(Box::new(LogisticRegression::<f64>::train(train, &self.config)?))
    }
}

/// Trains the logistic regression baseline on `train`.
pub fn train_lr_baseline(train: &Corpus, config: &LrBaselineConfig) -> Result<LogisticRegression<f64>, ExperimentError> {
    LogisticRegression::train(train, config)
}
