//! Exact (non-surrogate) ranking metrics: ROC curve, AUC and the rank-window
//! estimators of one-way and two-way partial AUC.
//!
//! Rank selection is deterministic: ties in score are broken by the original
//! index, lower index first, in both the descending (negatives) and
//! ascending (positives) orders.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{PaucError, Result};
use crate::scalar::Scalar;

/// Relative slack used when turning `n * fraction` into an integer rank.
const RANK_EPS: f64 = 1e-9;

/// Scores of positive and negative examples.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet<T> {
    pub pos: Vec<T>,
    pub neg: Vec<T>,
}

impl<T: Scalar> ScoreSet<T> {
    pub fn new(pos: Vec<T>, neg: Vec<T>) -> Result<Self> {
        let set = Self { pos, neg };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pos.is_empty() {
            return Err(PaucError::DegenerateClass("no positive scores"));
        }
        if self.neg.is_empty() {
            return Err(PaucError::DegenerateClass("no negative scores"));
        }
        if self.pos.iter().chain(&self.neg).any(|s| !s.is_finite()) {
            return Err(PaucError::NonFinite("score".into()));
        }
        Ok(())
    }

    pub fn n_pos(&self) -> usize {
        self.pos.len()
    }

    pub fn n_neg(&self) -> usize {
        self.neg.len()
    }

    /// Applies `f` to every score (used to check rank invariance).
    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            pos: self.pos.iter().map(|&x| f(x)).collect(),
            neg: self.neg.iter().map(|&x| f(x)).collect(),
        }
    }
}

/// Rank window. For one-way pAUC the negatives at descending ranks
/// `k1+1..=k2` are used; for two-way pAUC the positives at ascending ranks
/// `1..=k1` and the negatives at descending ranks `1..=k2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankRange {
    pub k1: usize,
    pub k2: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Normalization {
    /// Divide the pair count by `n_+ n_-`.
    Unnormalized,
    /// Divide by the number of selected pairs; the value lies in `[0, 1]`.
    #[default]
    Normalized,
}

fn floor_rank(x: f64) -> usize {
    (x + RANK_EPS * x.abs().max(1.0)).floor().max(0.0) as usize
}

fn ceil_rank(x: f64) -> usize {
    (x - RANK_EPS * x.abs().max(1.0)).ceil().max(0.0) as usize
}

/// `k1 = ceil(n_- a0)`, `k2 = floor(n_- a1)`.
pub fn opauc_window(n_neg: usize, alpha0: f64, alpha1: f64) -> Result<RankRange> {
    if !(0.0..=1.0).contains(&alpha0) || !(0.0..=1.0).contains(&alpha1) || alpha0 >= alpha1 {
        return Err(PaucError::invalid(
            "alpha",
            format!("need 0 <= alpha0 < alpha1 <= 1, got ({alpha0}, {alpha1})"),
        ));
    }
    let k1 = ceil_rank(n_neg as f64 * alpha0);
    let k2 = floor_rank(n_neg as f64 * alpha1).min(n_neg);
    if k1 >= k2 {
        return Err(PaucError::EmptyFprWindow { k1, k2 });
    }
    Ok(RankRange { k1, k2 })
}

/// `k1 = floor(n_+ alpha)`, `k2 = floor(n_- beta)`.
pub fn tpauc_window(n_pos: usize, n_neg: usize, alpha: f64, beta: f64) -> Result<RankRange> {
    if !(0.0..=1.0).contains(&alpha) || !(0.0..=1.0).contains(&beta) {
        return Err(PaucError::invalid(
            "alpha/beta",
            format!("need fractions in [0, 1], got ({alpha}, {beta})"),
        ));
    }
    let k1 = floor_rank(n_pos as f64 * alpha).min(n_pos);
    let k2 = floor_rank(n_neg as f64 * beta).min(n_neg);
    if k1 == 0 || k2 == 0 {
        return Err(PaucError::EmptySelectionWindow { k1, k2 });
    }
    Ok(RankRange { k1, k2 })
}

fn cmp_scores<T: Scalar>(a: T, b: T) -> Ordering {
    a.partial_cmp(&b).unwrap_or(Ordering::Equal)
}

/// Indices sorted by (score descending, index ascending).
pub fn descending_order<T: Scalar>(xs: &[T]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| cmp_scores(xs[b], xs[a]).then(a.cmp(&b)));
    idx
}

/// Indices sorted by (score ascending, index ascending).
pub fn ascending_order<T: Scalar>(xs: &[T]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| cmp_scores(xs[a], xs[b]).then(a.cmp(&b)));
    idx
}

/// Number of (positive, negative) pairs with `pos > neg` strictly.
fn count_correct<T: Scalar>(pos: &[T], neg: &[T]) -> u64 {
    let mut sorted: Vec<T> = neg.to_vec();
    sorted.sort_by(|a, b| cmp_scores(*a, *b));
    pos.iter()
        .map(|&p| sorted.partition_point(|&n| n < p) as u64)
        .sum()
}

/// Area under the ROC curve with half credit for ties.
pub fn roc_auc<T: Scalar>(scores: &ScoreSet<T>) -> Result<f64> {
    scores.validate()?;
    let mut neg: Vec<T> = scores.neg.clone();
    neg.sort_by(|a, b| cmp_scores(*a, *b));
    // twice the credited count, so that ties stay integral
    let twice: u64 = scores
        .pos
        .iter()
        .map(|&p| {
            let below = neg.partition_point(|&n| n < p) as u64;
            let upto = neg.partition_point(|&n| n <= p) as u64;
            2 * below + (upto - below)
        })
        .sum();
    let denom = (scores.n_pos() * scores.n_neg()) as f64;
    Ok((twice as f64 / 2.0) / denom)
}

/// One ROC operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC curve from the highest threshold down, starting at (0, 0).
pub fn roc_curve<T: Scalar>(scores: &ScoreSet<T>) -> Result<Vec<RocPoint>> {
    scores.validate()?;
    let mut all: Vec<(T, bool)> = scores
        .pos
        .iter()
        .map(|&s| (s, true))
        .chain(scores.neg.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| cmp_scores(b.0, a.0));
    let (np, nn) = (scores.n_pos() as f64, scores.n_neg() as f64);
    let mut curve = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < all.len() {
        let t = all[i].0;
        while i < all.len() && all[i].0 == t {
            if all[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        curve.push(RocPoint {
            threshold: t.to_f64_lossy(),
            fpr: fp as f64 / nn,
            tpr: tp as f64 / np,
        });
    }
    Ok(curve)
}

/// Rank-window estimator of one-way partial AUC over FPR in `[alpha0, alpha1]`.
pub fn opauc_exact<T: Scalar>(
    scores: &ScoreSet<T>,
    alpha0: f64,
    alpha1: f64,
    normalization: Normalization,
) -> Result<f64> {
    scores.validate()?;
    let RankRange { k1, k2 } = opauc_window(scores.n_neg(), alpha0, alpha1)?;
    let order = descending_order(&scores.neg);
    let window: Vec<T> = order[k1..k2].iter().map(|&j| scores.neg[j]).collect();
    let count = count_correct(&scores.pos, &window);
    let denom = match normalization {
        Normalization::Unnormalized => scores.n_pos() * scores.n_neg(),
        Normalization::Normalized => scores.n_pos() * (k2 - k1),
    };
    Ok(count as f64 / denom as f64)
}

/// Rank-window estimator of two-way partial AUC with TPR >= alpha, FPR <= beta.
pub fn tpauc_exact<T: Scalar>(
    scores: &ScoreSet<T>,
    alpha: f64,
    beta: f64,
    normalization: Normalization,
) -> Result<f64> {
    scores.validate()?;
    let RankRange { k1, k2 } = tpauc_window(scores.n_pos(), scores.n_neg(), alpha, beta)?;
    let pos_order = ascending_order(&scores.pos);
    let neg_order = descending_order(&scores.neg);
    let pos: Vec<T> = pos_order[..k1].iter().map(|&i| scores.pos[i]).collect();
    let neg: Vec<T> = neg_order[..k2].iter().map(|&j| scores.neg[j]).collect();
    let count = count_correct(&pos, &neg);
    let denom = match normalization {
        Normalization::Unnormalized => scores.n_pos() * scores.n_neg(),
        Normalization::Normalized => k1 * k2,
    };
    Ok(count as f64 / denom as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn example() -> ScoreSet<f64> {
        ScoreSet::new(vec![0.9, 0.4], vec![0.8, 0.3, 0.1]).unwrap()
    }

    #[test]
    fn auc_examples() {
        let s = ScoreSet::new(vec![1.0], vec![0.0]).unwrap();
        assert_eq!(roc_auc(&s).unwrap(), 1.0);
        let s = ScoreSet::new(vec![0.5], vec![0.5]).unwrap();
        assert_eq!(roc_auc(&s).unwrap(), 0.5);
        assert_abs_diff_eq!(roc_auc(&example()).unwrap(), 5.0 / 6.0, epsilon = 1e-15);
    }

    #[test]
    fn degenerate_class_rejected() {
        let s = ScoreSet::<f64> { pos: vec![], neg: vec![1.0] };
        assert!(matches!(roc_auc(&s), Err(PaucError::DegenerateClass(_))));
        assert!(ScoreSet::new(vec![1.0_f64], vec![]).is_err());
    }

    #[test]
    fn opauc_examples() {
        let s = example();
        let u = opauc_exact(&s, 0.0, 1.0 / 3.0, Normalization::Unnormalized).unwrap();
        assert_abs_diff_eq!(u, 1.0 / 6.0, epsilon = 1e-15);
        let n = opauc_exact(&s, 0.0, 1.0 / 3.0, Normalization::Normalized).unwrap();
        assert_abs_diff_eq!(n, 0.5, epsilon = 1e-15);
        let full = opauc_exact(&s, 0.0, 1.0, Normalization::Unnormalized).unwrap();
        assert_eq!(full, roc_auc(&s).unwrap());
    }

    #[test]
    fn opauc_empty_window() {
        let s = example();
        // floor(3 * 0.2) = 0 = k1
        assert!(matches!(
            opauc_exact(&s, 0.0, 0.2, Normalization::Normalized),
            Err(PaucError::EmptyFprWindow { k1: 0, k2: 0 })
        ));
        assert!(opauc_exact(&s, 0.5, 0.4, Normalization::Normalized).is_err());
    }

    #[test]
    fn tpauc_examples() {
        let s = ScoreSet::new(vec![0.9, 0.6, 0.4], vec![0.5, 0.3, 0.2, 0.1]).unwrap();
        let u = tpauc_exact(&s, 2.0 / 3.0, 0.5, Normalization::Unnormalized).unwrap();
        assert_abs_diff_eq!(u, 0.25, epsilon = 1e-15);
        let n = tpauc_exact(&s, 2.0 / 3.0, 0.5, Normalization::Normalized).unwrap();
        assert_abs_diff_eq!(n, 0.75, epsilon = 1e-15);
        let sep = ScoreSet::new(vec![3.0, 2.0, 5.0], vec![0.5, 1.0, -1.0, 0.0]).unwrap();
        assert_eq!(tpauc_exact(&sep, 0.4, 0.6, Normalization::Normalized).unwrap(), 1.0);
    }

    #[test]
    fn tpauc_empty_selection() {
        let s = ScoreSet::new(vec![0.9, 0.6], vec![0.5, 0.3]).unwrap();
        assert!(matches!(
            tpauc_exact(&s, 0.4, 0.5, Normalization::Normalized),
            Err(PaucError::EmptySelectionWindow { k1: 0, k2: 1 })
        ));
    }

    #[test]
    fn windows_tolerate_representation_error() {
        // 10 * 0.3 = 3.0000000000000004 and 10 * 0.7 = 7.000000000000001
        assert_eq!(opauc_window(10, 0.3, 0.7).unwrap(), RankRange { k1: 3, k2: 7 });
        assert_eq!(tpauc_window(3, 10, 1.0 / 3.0, 0.3).unwrap(), RankRange { k1: 1, k2: 3 });
    }

    #[test]
    fn tie_break_is_by_index() {
        assert_eq!(descending_order(&[1.0, 2.0, 2.0, 0.5]), vec![1, 2, 0, 3]);
        assert_eq!(ascending_order(&[1.0, 0.5, 0.5]), vec![1, 2, 0]);
    }

    #[test]
    fn roc_curve_endpoints() {
        let c = roc_curve(&example()).unwrap();
        assert_eq!(c.first().unwrap().fpr, 0.0);
        let last = c.last().unwrap();
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        assert_eq!(c.len(), 6);
    }
}
