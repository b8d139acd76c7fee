//! Precision, recall, F1 and macro F1 over a fixed label set.
//!
//! All functions are generic over [`Scalar`], so reports can be computed in
//! `f64` or exactly in `Ratio<i64>`. Any zero denominator yields 0.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("predictions ({predictions}) and gold ({gold}) differ in length")]
    LengthMismatch { predictions: usize, gold: usize },
    #[error("no items to evaluate")]
    Empty,
    #[error("label {label:?} at index {index} is not in the label set")]
    OutOfSetLabel { index: usize, label: String },
    #[error("unknown class {0:?}")]
    UnknownClass(String),
    #[error("label set is empty")]
    EmptyLabelSet,
    #[error("duplicate label {0:?} in label set")]
    DuplicateLabel(String),
}

/// One-vs-rest counts for a single class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

/// Per-class one-vs-rest counts for a prediction/gold pairing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    labels: Vec<String>,
    per_class: Vec<ClassCounts>,
    total: usize,
}

impl ConfusionCounts {
    pub fn from_pairs<P, G>(predictions: &[P], gold: &[G], label_set: &[String]) -> Result<Self, MetricsError>
    where
        P: AsRef<str>,
        G: AsRef<str>,
    {
        check_label_set(label_set)?;
        if predictions.len() != gold.len() {
            return Err(MetricsError::LengthMismatch { predictions: predictions.len(), gold: gold.len() });
        }
        if predictions.is_empty() {
            return Err(MetricsError::Empty);
        }
        let index_of = |label: &str, index: usize| {
            label_set
                .iter()
                .position(|l| l == label)
                .ok_or_else(|| MetricsError::OutOfSetLabel { index, label: label.to_string() })
        };
        let mut per_class = vec![ClassCounts::default(); label_set.len()];
        for (i, (p, g)) in predictions.iter().zip(gold).enumerate() {
            let p = index_of(p.as_ref(), i)?;
            let g = index_of(g.as_ref(), i)?;
            if p == g {
                per_class[p].true_positives += 1;
            } else {
                per_class[p].false_positives += 1;
                per_class[g].false_negatives += 1;
            }
        }
        Ok(Self { labels: label_set.to_vec(), per_class, total: predictions.len() })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn class(&self, label: &str) -> Result<ClassCounts, MetricsError> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| self.per_class[i])
            .ok_or_else(|| MetricsError::UnknownClass(label.to_string()))
    }

    pub fn per_class(&self) -> &[ClassCounts] {
        &self.per_class
    }
}

fn check_label_set(label_set: &[String]) -> Result<(), MetricsError> {
    if label_set.is_empty() {
        return Err(MetricsError::EmptyLabelSet);
    }
    for (i, l) in label_set.iter().enumerate() {
        if label_set[..i].contains(l) {
            return Err(MetricsError::DuplicateLabel(l.clone()));
        }
    }
    Ok(())
}

fn ratio<S: Scalar>(num: usize, den: usize) -> S {
    if den == 0 {
        S::zero()
    } else {
        S::from_count(num) / S::from_count(den)
    }
}

pub fn precision_of<S: Scalar>(c: ClassCounts) -> S {
    ratio(c.true_positives, c.true_positives + c.false_positives)
}

pub fn recall_of<S: Scalar>(c: ClassCounts) -> S {
    ratio(c.true_positives, c.true_positives + c.false_negatives)
}

/// TP / (TP + FP) for `class`.
pub fn precision<S: Scalar>(counts: &ConfusionCounts, class: &str) -> Result<S, MetricsError> {
    counts.class(class).map(precision_of)
}

/// TP / (TP + FN) for `class`.
pub fn recall<S: Scalar>(counts: &ConfusionCounts, class: &str) -> Result<S, MetricsError> {
    counts.class(class).map(recall_of)
}

/// Harmonic mean 2pr / (p + r).
pub fn f1<S: Scalar>(p: S, r: S) -> S {
    let sum = p + r;
    if sum == S::zero() {
        S::zero()
    } else {
        (S::one() + S::one()) * p * r / sum
    }
}

/// Unweighted mean of per-class F1 values.
pub fn macro_f1<S: Scalar>(per_class_f1: &[S]) -> Result<S, MetricsError> {
    if per_class_f1.is_empty() {
        return Err(MetricsError::EmptyLabelSet);
    }
    let sum = per_class_f1.iter().fold(S::zero(), |a, b| a + *b);
    Ok(sum / S::from_count(per_class_f1.len()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores<S> {
    pub label: String,
    pub precision: S,
    pub recall: S,
    pub f1: S,
    /// Number of gold items of this class.
    pub support: usize,
}

/// Per-class scores plus macro F1 for one evaluated configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport<S> {
    pub label_set: Vec<String>,
    pub per_class: Vec<ClassScores<S>>,
    pub macro_f1: S,
    pub items: usize,
    #[serde(default)]
    pub config_fingerprint: String,
}

impl<S: Scalar> EvalReport<S> {
    pub fn from_counts(counts: &ConfusionCounts) -> Self {
        let per_class: Vec<ClassScores<S>> = counts
            .labels
            .iter()
            .zip(&counts.per_class)
            .map(|(label, c)| {
                let p = precision_of::<S>(*c);
                let r = recall_of::<S>(*c);
                ClassScores {
                    label: label.clone(),
                    precision: p,
                    recall: r,
                    f1: f1(p, r),
                    support: c.true_positives + c.false_negatives,
                }
            })
            .collect();
        let f1s: Vec<S> = per_class.iter().map(|c| c.f1).collect();
        let macro_f1 = macro_f1(&f1s).expect("label set checked non-empty");
        Self {
            label_set: counts.labels.clone(),
            per_class,
            macro_f1,
            items: counts.total,
            config_fingerprint: String::new(),
        }
    }

    pub fn with_fingerprint(mut self, fingerprint: impl Into<String>) -> Self {
        self.config_fingerprint = fingerprint.into();
        self
    }

    pub fn class(&self, label: &str) -> Option<&ClassScores<S>> {
        self.per_class.iter().find(|c| c.label == label)
    }
}

/// Scores predictions against gold labels. Macro F1 averages over every class
/// in `label_set`, including classes that never occur.
pub fn evaluate<S, P, G>(predictions: &[P], gold: &[G], label_set: &[String]) -> Result<EvalReport<S>, MetricsError>
where
    S: Scalar,
    P: AsRef<str>,
    G: AsRef<str>,
{
    let counts = ConfusionCounts::from_pairs(predictions, gold, label_set)?;
    Ok(EvalReport::from_counts(&counts))
}

/// Percentage rounded to one decimal for display.
pub fn percent_1dp(value: f64) -> String {
    format!("{:.1}", value * 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;

    type Q = Ratio<i64>;

    fn labels(ls: &[&str]) -> Vec<String> {
        ls.iter().map(|s| s.to_string()).collect()
    }

    fn counts(tp: usize, fp: usize, fn_: usize) -> ClassCounts {
        ClassCounts { true_positives: tp, false_positives: fp, false_negatives: fn_ }
    }

    #[test]
    fn precision_recall_examples() {
        assert_eq!(precision_of::<f64>(counts(5, 0, 0)), 1.0);
        assert_eq!(recall_of::<f64>(counts(0, 3, 0)), 0.0);
        let c = counts(3, 1, 2);
        assert_eq!(precision_of::<Q>(c), Q::new(3, 4));
        assert_eq!(recall_of::<Q>(c), Q::new(3, 5));
    }

    #[test]
    fn f1_examples() {
        assert_eq!(f1(1.0, 1.0), 1.0);
        assert_eq!(f1(1.0, 0.0), 0.0);
        assert_eq!(f1(0.0, 0.0), 0.0);
        assert_eq!(f1(Q::new(3, 4), Q::new(3, 5)), Q::new(2, 3));
    }

    #[test]
    fn macro_f1_examples() {
        assert_eq!(macro_f1(&[1.0, 0.0]).unwrap(), 0.5);
        assert_eq!(macro_f1(&[0.37]).unwrap(), 0.37);
        assert_eq!(macro_f1::<f64>(&[]), Err(MetricsError::EmptyLabelSet));
    }

    #[test]
    fn perfect_predictions() {
        let gold = ["a", "b", "c", "a"];
        let r: EvalReport<f64> = evaluate(&gold, &gold, &labels(&["a", "b", "c"])).unwrap();
        assert_eq!(r.macro_f1, 1.0);
    }

    #[test]
    fn never_predicted_class_counts_as_zero() {
        // balanced 2-class set of 10, everything predicted "a"
        let gold: Vec<&str> = ["a"; 5].iter().chain(["b"; 5].iter()).copied().collect();
        let preds = ["a"; 10];
        let r: EvalReport<Q> = evaluate(&preds, &gold, &labels(&["a", "b"])).unwrap();
        let a = r.class("a").unwrap();
        assert_eq!((a.precision, a.recall, a.f1), (Q::new(1, 2), Q::new(1, 1), Q::new(2, 3)));
        let b = r.class("b").unwrap();
        assert_eq!((b.precision, b.recall, b.f1), (Q::new(0, 1), Q::new(0, 1), Q::new(0, 1)));
        assert_eq!(r.macro_f1, Q::new(1, 3));
    }

    #[test]
    fn error_paths() {
        let ls = labels(&["a", "b"]);
        assert_eq!(evaluate::<f64, &str, &str>(&[], &[], &ls), Err(MetricsError::Empty));
        assert!(matches!(
            evaluate::<f64, _, _>(&["a"], &["a", "b"], &ls),
            Err(MetricsError::LengthMismatch { .. })
        ));
        assert_eq!(
            evaluate::<f64, _, _>(&["a", "z"], &["a", "b"], &ls),
            Err(MetricsError::OutOfSetLabel { index: 1, label: "z".into() })
        );
        let c = ConfusionCounts::from_pairs(&["a"], &["a"], &ls).unwrap();
        assert_eq!(precision::<f64>(&c, "q"), Err(MetricsError::UnknownClass("q".into())));
    }

    #[test]
    fn display_rounding() {
        assert_eq!(percent_1dp(0.647), "64.7");
        assert_eq!(percent_1dp(1.0), "100.0");
    }
}
