//! Scalar abstractions shared by the numeric modules.
//!
//! Counting metrics only need field arithmetic, so they accept any [`Scalar`],
//! including exact rationals. Anything involving `exp`, `ln` or `sqrt`
//! (entailment normalization, cosine similarity, logistic regression) needs a
//! [`Real`].

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, Num, ToPrimitive};

/// Field-like scalar usable for precision / recall / F1 arithmetic.
pub trait Scalar: Num + Copy + PartialOrd + FromPrimitive + Debug + Send + Sync + 'static {
    /// Exact conversion of a count.
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }
}

impl<T> Scalar for T where T: Num + Copy + PartialOrd + FromPrimitive + Debug + Send + Sync + 'static {}

/// Floating point scalar: `f32` or `f64`.
pub trait Real: Scalar + Float + ToPrimitive + Display + Default {
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Numerically stable softmax. Returns an empty vector for empty input.
pub fn softmax<F: Real>(logits: &[F]) -> Vec<F> {
    let Some(max) = logits.iter().copied().fold(None, |acc: Option<F>, x| match acc {
        Some(m) if m >= x => Some(m),
        _ => Some(x),
    }) else {
        return Vec::new();
    };
    if max == F::neg_infinity() {
        let n = F::from_count(logits.len());
        return vec![F::one() / n; logits.len()];
    }
    if max == F::infinity() {
        // every +inf entry shares the mass
        let n = F::from_count(logits.iter().filter(|x| **x == F::infinity()).count());
        return logits
            .iter()
            .map(|x| if *x == F::infinity() { F::one() / n } else { F::zero() })
            .collect();
    }
    let exps: Vec<F> = logits.iter().map(|x| (*x - max).exp()).collect();
    let total = exps.iter().fold(F::zero(), |a, b| a + *b);
    exps.into_iter().map(|e| e / total).collect()
}

/// Index of the largest value; ties go to the earliest index.
pub fn argmax_first<S: PartialOrd + Copy>(values: &[S]) -> Option<usize> {
    let mut best: Option<(usize, S)> = None;
    for (i, v) in values.iter().copied().enumerate() {
        match best {
            Some((_, b)) if v.partial_cmp(&b) != Some(std::cmp::Ordering::Greater) => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}
