//! Pairwise surrogate losses, DRO closed forms and the full-batch pAUC
//! objectives (CVaR and KL variants for one-way and two-way pAUC).
//!
//! Every objective here is evaluated over all positive x negative pairs and
//! is meant as a reference: optimizers in [`crate::optim`] estimate the same
//! gradients from mini-batches.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{PaucError, Result};
use crate::metrics::{ascending_order, descending_order};
use crate::model::{ScoreModel, ScoreTable};
use crate::scalar::{csum, log_mean_exp, sigmoid, softplus, CompensatedSum, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `(c - m)_+^2`
    SquaredHinge,
    /// `log(1 + exp(-m / c))`
    Logistic,
}

impl LossKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "squared_hinge" | "sqh" => Ok(LossKind::SquaredHinge),
            "logistic" => Ok(LossKind::Logistic),
            other => Err(PaucError::invalid("loss", format!("unknown loss `{other}`"))),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            LossKind::SquaredHinge => "squared_hinge",
            LossKind::Logistic => "logistic",
        }
    }
}

/// Convex, non-increasing pairwise surrogate ℓ applied to score margins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairwiseLoss<T> {
    pub kind: LossKind,
    pub c: T,
}

impl<T: Scalar> PairwiseLoss<T> {
    pub fn new(kind: LossKind, c: T) -> Result<Self> {
        if !(c > T::zero()) || !c.is_finite() {
            return Err(PaucError::invalid("c", "must be positive and finite"));
        }
        Ok(Self { kind, c })
    }

    pub fn squared_hinge(c: T) -> Self {
        Self::new(LossKind::SquaredHinge, c).expect("positive margin")
    }

    /// `(ℓ(margin), ℓ'(margin))`.
    #[inline]
    pub fn eval(&self, margin: T) -> (T, T) {
        match self.kind {
            LossKind::SquaredHinge => {
                let r = (self.c - margin).max(T::zero());
                (r * r, -(r + r))
            }
            LossKind::Logistic => {
                let z = -margin / self.c;
                (softplus(z), -sigmoid(z) / self.c)
            }
        }
    }

    #[inline]
    pub fn value(&self, margin: T) -> T {
        self.eval(margin).0
    }

    /// Smoothness constant of ℓ (bound on ℓ'').
    pub fn smoothness(&self) -> T {
        match self.kind {
            LossKind::SquaredHinge => T::lit(2.0),
            LossKind::Logistic => T::lit(0.25) / (self.c * self.c),
        }
    }
}

/// DRO hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DroParams<T> {
    /// Inner KL temperature λ.
    pub lambda: T,
    /// Outer KL temperature λ′ (two-way pAUC).
    pub lambda_prime: T,
    /// FPR budget / inner CVaR level.
    pub beta: T,
    /// TPR budget / outer CVaR level.
    pub alpha: T,
}

impl<T: Scalar> DroParams<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > T::zero()) || !(self.lambda_prime > T::zero()) {
            return Err(PaucError::invalid("lambda", "must be positive"));
        }
        let unit = |x: T| x > T::zero() && x <= T::one();
        if !unit(self.beta) || !unit(self.alpha) {
            return Err(PaucError::invalid("alpha/beta", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Per-positive thresholds `s` and the outer threshold `pi`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdVector<T> {
    pub s: Vec<T>,
    pub pi: T,
}

impl<T: Scalar> ThresholdVector<T> {
    pub fn zeros(n_pos: usize) -> Self {
        Self { s: vec![T::zero(); n_pos], pi: T::zero() }
    }
}

/// `n * level` as an integer, or an error if it is not integral.
pub fn integral_count(n: usize, level: f64) -> Result<usize> {
    let x = n as f64 * level;
    let r = x.round();
    if !(level > 0.0) || (x - r).abs() > 1e-9 * x.abs().max(1.0) || r < 1.0 || r > n as f64 {
        return Err(PaucError::CvarLevelNotIntegral { n, level });
    }
    Ok(r as usize)
}

fn desc<T: Scalar>(a: &T, b: &T) -> Ordering {
    b.partial_cmp(a).unwrap_or(Ordering::Equal)
}

/// Mean of the `n * gamma` largest losses.
pub fn dro_cvar<T: Scalar>(losses: &[T], gamma: T) -> Result<T> {
    let k = integral_count(losses.len(), gamma.to_f64_lossy())?;
    let mut sorted = losses.to_vec();
    sorted.sort_by(desc);
    Ok(csum(sorted[..k].iter().copied()) / T::from_count(k))
}

/// `λ log((1/n) Σ exp(ℓ_i / λ))`, evaluated with max subtraction.
pub fn dro_kl<T: Scalar>(losses: &[T], lambda: T) -> Result<T> {
    if !(lambda > T::zero()) {
        return Err(PaucError::invalid("lambda", "must be positive"));
    }
    if losses.is_empty() {
        return Err(PaucError::invalid("losses", "empty loss vector"));
    }
    let scaled: Vec<T> = losses.iter().map(|&l| l / lambda).collect();
    Ok(lambda * log_mean_exp(&scaled))
}

/// Variational CVaR objective `s + (1/(nγ)) Σ (ℓ_i - s)_+` at a fixed `s`.
pub fn cvar_variational<T: Scalar>(losses: &[T], gamma: T, s: T) -> T {
    let n = T::from_count(losses.len());
    let hinge = csum(losses.iter().map(|&l| (l - s).max(T::zero())));
    s + hinge / (n * gamma)
}

/// Scores and score gradients of every positive and negative example.
#[derive(Debug, Clone)]
pub struct FullTables<T> {
    pub pos: ScoreTable<T>,
    pub neg: ScoreTable<T>,
}

impl<T: Scalar> FullTables<T> {
    pub fn compute(model: &ScoreModel<T>, data: &LabeledDataset<T>) -> Result<Self> {
        data.require_both_classes()?;
        Ok(Self {
            pos: ScoreTable::compute(model, data, data.pos_ids())?,
            neg: ScoreTable::compute(model, data, data.neg_ids())?,
        })
    }
}

/// Pairwise losses and derivatives for a block of positives x negatives.
#[derive(Debug, Clone)]
pub struct PairBlock<T> {
    pub n_pos: usize,
    pub n_neg: usize,
    /// Row-major `n_pos x n_neg`.
    pub loss: Vec<T>,
    pub dloss: Vec<T>,
}

impl<T: Scalar> PairBlock<T> {
    pub fn compute(pos: &ScoreTable<T>, neg: &ScoreTable<T>, loss: &PairwiseLoss<T>) -> Self {
        Self::from_scores(&pos.scores, &neg.scores, loss)
    }

    pub fn from_scores(pos: &[T], neg: &[T], loss: &PairwiseLoss<T>) -> Self {
        let mut l = Vec::with_capacity(pos.len() * neg.len());
        let mut d = Vec::with_capacity(pos.len() * neg.len());
        for &hp in pos {
            for &hn in neg {
                let (v, dv) = loss.eval(hp - hn);
                l.push(v);
                d.push(dv);
            }
        }
        Self { n_pos: pos.len(), n_neg: neg.len(), loss: l, dloss: d }
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.loss[i * self.n_neg..(i + 1) * self.n_neg]
    }

    pub fn drow(&self, i: usize) -> &[T] {
        &self.dloss[i * self.n_neg..(i + 1) * self.n_neg]
    }
}

/// `Σ_ij weight_ij ∇_w L_ij` where `∇_w L_ij = ℓ'_ij (∇h_i - ∇h_j)`.
///
/// `weight` is row-major over the block. Coefficients are accumulated per
/// example first so the cost is `O(pairs + examples * params)`.
pub fn weighted_pair_grad<T: Scalar>(
    pos: &ScoreTable<T>,
    neg: &ScoreTable<T>,
    block: &PairBlock<T>,
    weight: impl Fn(usize, usize) -> T,
) -> Vec<T> {
    let mut pos_coef: Vec<CompensatedSum<T>> = vec![CompensatedSum::new(); block.n_pos];
    let mut neg_coef: Vec<CompensatedSum<T>> = vec![CompensatedSum::new(); block.n_neg];
    for (i, acc) in pos_coef.iter_mut().enumerate() {
        let d = block.drow(i);
        for j in 0..block.n_neg {
            let c = weight(i, j) * d[j];
            if c != T::zero() {
                acc.add(c);
                neg_coef[j].add(c);
            }
        }
    }
    let p = pos.num_params;
    let mut grad: Vec<CompensatedSum<T>> = vec![CompensatedSum::new(); p];
    for (i, c) in pos_coef.iter().enumerate() {
        let c = c.value();
        if c != T::zero() {
            for (g, &v) in grad.iter_mut().zip(pos.grad(i)) {
                g.add(c * v);
            }
        }
    }
    for (j, c) in neg_coef.iter().enumerate() {
        let c = c.value();
        if c != T::zero() {
            for (g, &v) in grad.iter_mut().zip(neg.grad(j)) {
                g.add(-(c * v));
            }
        }
    }
    grad.iter().map(|g| g.value()).collect()
}

/// Mean pairwise surrogate and its gradient (the full-AUC objective).
pub fn mean_pairwise_loss<T: Scalar>(
    model: &ScoreModel<T>,
    data: &LabeledDataset<T>,
    loss: &PairwiseLoss<T>,
) -> Result<(T, Vec<T>)> {
    let t = FullTables::compute(model, data)?;
    let block = PairBlock::compute(&t.pos, &t.neg, loss);
    let pairs = T::from_count(block.loss.len());
    let value = csum(block.loss.iter().copied()) / pairs;
    let w = T::one() / pairs;
    let grad = weighted_pair_grad(&t.pos, &t.neg, &block, |_, _| w);
    Ok((value, grad))
}

fn check_level<T: Scalar>(name: &'static str, x: T) -> Result<()> {
    if !(x > T::zero() && x <= T::one()) {
        return Err(PaucError::invalid(name, "must lie in (0, 1]"));
    }
    Ok(())
}

/// `F(w, s) = (1/n_+) Σ_i (s_i + (1/β)(1/n_-) Σ_j (L_ij - s_i)_+)`.
pub fn opauc_cvar_objective<T: Scalar>(
    model: &ScoreModel<T>,
    data: &LabeledDataset<T>,
    loss: &PairwiseLoss<T>,
    beta: T,
    s: &[T],
) -> Result<T> {
    check_level("beta", beta)?;
    let t = FullTables::compute(model, data)?;
    if s.len() != data.n_pos() {
        return Err(PaucError::DimensionMismatch { expected: data.n_pos(), got: s.len() });
    }
    let block = PairBlock::compute(&t.pos, &t.neg, loss);
    let per_pos = (0..block.n_pos).map(|i| cvar_variational(block.row(i), beta, s[i]));
    Ok(csum(per_pos) / T::from_count(block.n_pos))
}

/// Subgradient of `F(w, s)` using the indicator `I(L_ij - s_i > 0)`.
/// Returns `(F, ∂_w F, ∂_s F)`.
pub fn opauc_cvar_grad<T: Scalar>(
    model: &ScoreModel<T>,
    data: &LabeledDataset<T>,
    loss: &PairwiseLoss<T>,
    beta: T,
    s: &[T],
) -> Result<(T, Vec<T>, Vec<T>)> {
    check_level("beta", beta)?;
    if s.len() != data.n_pos() {
        return Err(PaucError::DimensionMismatch { expected: data.n_pos(), got: s.len() });
    }
    let t = FullTables::compute(model, data)?;
    let block = PairBlock::compute(&t.pos, &t.neg, loss);
    let (np, nn) = (T::from_count(block.n_pos), T::from_count(block.n_neg));
    let value = csum((0..block.n_pos).map(|i| cvar_variational(block.row(i), beta, s[i]))) / np;
    let scale = T::one() / (np * nn * beta);
    let grad_w = weighted_pair_grad(&t.pos, &t.neg, &block, |i, j| {
        if block.loss[i * block.n_neg + j] - s[i] > T::zero() {
            scale
        } else {
            T::zero()
        }
    });
    let grad_s = (0..block.n_pos)
        .map(|i| {
            let active = block.row(i).iter().filter(|&&l| l - s[i] > T::zero()).count();
            (T::one() - T::from_count(active) / (beta * nn)) / np
        })
        .collect();
    Ok((value, grad_w, grad_s))
}

/// Per-positive minimizers `s_i`: the `n_- β`-th largest pairwise loss.
pub fn opauc_cvar_argmin_s<T: Scalar>(
    model: &ScoreModel<T>,
    data: &LabeledDataset<T>,
    loss: &PairwiseLoss<T>,
    beta: T,
) -> Result<Vec<T>> {
    let t = FullTables::compute(model, data)?;
    let k = integral_count(data.n_neg(), beta.to_f64_lossy())?;
    let block = PairBlock::compute(&t.pos, &t.neg, loss);
    Ok((0..block.n_pos)
        .map(|i| {
            let mut row = block.row(i).to_vec();
            row.sort_by(desc);
            row[k - 1]
        })
        .collect())
}

/// `min_s F(w, s)`: the mean over positives of the CVaR of that positive's
/// pairwise losses at level β.
pub fn opauc_cvar_min<T: Scalar>(
    model: &ScoreModel<T>,
    data: &LabeledDataset<T>,
    loss: &PairwiseLoss<T>,
    beta: T,
) -> Result<T> {
    check_level("beta", beta)?;
    let t = FullTables::compute(model, data)?;
    let block = PairBlock::compute(&t.pos, &t.neg, loss);
    let mut acc = CompensatedSum::new();
    for i in 0..block.n_pos {
        acc.add(dro_cvar(block.row(i), beta)?);
    }
    Ok(acc.value() / T::from_count(block.n_pos))
}

/// Surrogate restricted to the `n_- β` highest-scored negatives (the sorted
/// top-k objective), selected by score rather than by loss.
pub fn opauc_topk_surrogate<T: Scalar>(
    model: &ScoreModel<T>,
    data: &LabeledDataset<T>,
    loss: &PairwiseLoss<T>,
    beta: T,
) -> Result<T> {
    check_level("beta", beta)?;
    let t = FullTables::compute(model, data)?;
    let k = integral_count(data.n_neg(), beta.to_f64_lossy())?;
    let order = descending_order(&t.neg.scores);
    let top: Vec<T> = order[..k].iter().map(|&j| t.neg.scores[j]).collect();
    let per_pos = t
        .pos
        .scores
        .iter()
        .map(|&hp| csum(top.iter().map(|&hn| loss.value(hp - hn))) / T::from_count(k));
    Ok(csum(per_pos) / T::from_count(t.pos.len()))
}

/// Value and gradient of `(1/n_+) Σ_i λ log E_j exp(L_ij / λ)`.
pub fn opauc_kl_objective_and_grad<T: Scalar>(
    model: &ScoreModel<T>,
    data: &LabeledDataset<T>,
    loss: &PairwiseLoss<T>,
    lambda: T,
) -> Result<(T, Vec<T>)> {
    if !(lambda > T::zero()) {
        return Err(PaucError::invalid("lambda", "must be positive"));
    }
    let t = FullTables::compute(model, data)?;
    let block = PairBlock::compute(&t.pos, &t.neg, loss);
    let np = T::from_count(block.n_pos);
    let (values, weights) = kl_rows(&block, lambda);
    let value = csum(values.iter().copied()) / np;
    let grad = weighted_pair_grad(&t.pos, &t.neg, &block, |i, j| weights[i * block.n_neg + j] / np);
    Ok((value, grad))
}

/// Per-positive `λ log E_j exp(L_ij/λ)` and the row-softmax weights.
fn kl_rows<T: Scalar>(block: &PairBlock<T>, lambda: T) -> (Vec<T>, Vec<T>) {
    let mut values = Vec::with_capacity(block.n_pos);
    let mut weights = Vec::with_capacity(block.loss.len());
    for i in 0..block.n_pos {
        let row = block.row(i);
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let e: Vec<T> = row.iter().map(|&l| ((l - m) / lambda).exp()).collect();
        let z = csum(e.iter().copied());
        values.push(m + lambda * (z / T::from_count(block.n_neg)).ln());
        weights.extend(e.iter().map(|&v| v / z));
    }
    (values, weights)
}

/// Value and gradient of `λ′ log E_i (E_j exp(L_ij/λ))^{λ/λ′}`.
pub fn tpauc_kl_objective_and_grad<T: Scalar>(
    model: &ScoreModel<T>,
    data: &LabeledDataset<T>,
    loss: &PairwiseLoss<T>,
    lambda: T,
    lambda_prime: T,
) -> Result<(T, Vec<T>)> {
    if !(lambda > T::zero()) || !(lambda_prime > T::zero()) {
        return Err(PaucError::invalid("lambda", "must be positive"));
    }
    let t = FullTables::compute(model, data)?;
    let block = PairBlock::compute(&t.pos, &t.neg, loss);
    let (inner, weights) = kl_rows(&block, lambda);
    // inner_i = λ log g_i, so (λ/λ′) log g_i = inner_i / λ′
    let outer: Vec<T> = inner.iter().map(|&v| v / lambda_prime).collect();
    let value = lambda_prime * log_mean_exp(&outer);
    let m = outer.iter().copied().fold(T::neg_infinity(), T::max);
    let e: Vec<T> = outer.iter().map(|&a| (a - m).exp()).collect();
    let z = csum(e.iter().copied());
    let q: Vec<T> = e.iter().map(|&v| v / z).collect();
    let grad = weighted_pair_grad(&t.pos, &t.neg, &block, |i, j| q[i] * weights[i * block.n_neg + j]);
    Ok((value, grad))
}

/// Mean surrogate over the `n_+ α` lowest-scored positives and the `n_- β`
/// highest-scored negatives.
pub fn tpauc_cvar_objective<T: Scalar>(
    model: &ScoreModel<T>,
    data: &LabeledDataset<T>,
    loss: &PairwiseLoss<T>,
    alpha: T,
    beta: T,
) -> Result<T> {
    check_level("alpha", alpha)?;
    check_level("beta", beta)?;
    data.require_both_classes()?;
    let k1 = integral_count(data.n_pos(), alpha.to_f64_lossy())?;
    let k2 = integral_count(data.n_neg(), beta.to_f64_lossy())?;
    let pos: Vec<T> = data.pos_ids().iter().map(|&i| model.score(data.row(i))).collect::<Result<_>>()?;
    let neg: Vec<T> = data.neg_ids().iter().map(|&j| model.score(data.row(j))).collect::<Result<_>>()?;
    let hard_pos = &ascending_order(&pos)[..k1];
    let hard_neg = &descending_order(&neg)[..k2];
    let total = csum(
        hard_pos
            .iter()
            .flat_map(|&i| hard_neg.iter().map(move |&j| (i, j)))
            .map(|(i, j)| loss.value(pos[i] - neg[j])),
    );
    Ok(total / T::from_count(k1 * k2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Arch;
    use approx::assert_abs_diff_eq;

    #[test]
    fn pairwise_loss_examples() {
        let sq = PairwiseLoss::squared_hinge(1.0_f64);
        assert_eq!(sq.eval(1.0), (0.0, 0.0));
        let (v, d) = sq.eval(-0.3);
        assert_abs_diff_eq!(v, 1.69, epsilon = 1e-12);
        assert_abs_diff_eq!(d, -2.6, epsilon = 1e-12);
        let lg = PairwiseLoss::new(LossKind::Logistic, 1.0_f64).unwrap();
        let (v, d) = lg.eval(0.0);
        assert_abs_diff_eq!(v, 2f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(d, -0.5, epsilon = 1e-15);
        assert!(PairwiseLoss::new(LossKind::Logistic, 0.0_f64).is_err());
    }

    #[test]
    fn loss_assumptions_hold() {
        for loss in [PairwiseLoss::squared_hinge(1.0_f64), PairwiseLoss::new(LossKind::Logistic, 0.5).unwrap()] {
            assert!(loss.eval(0.0).1 < 0.0);
            let mut prev = f64::INFINITY;
            for k in -40..40 {
                let m = k as f64 * 0.1;
                let v = loss.value(m);
                assert!(v <= prev);
                prev = v;
            }
        }
    }

    #[test]
    fn cvar_examples() {
        assert_eq!(dro_cvar(&[0.5, 2.0, 1.0, 3.0], 0.5).unwrap(), 2.5);
        assert_eq!(dro_cvar(&[1.7, 1.7, 1.7], 1.0 / 3.0).unwrap(), 1.7);
        assert_abs_diff_eq!(dro_cvar(&[0.5, 2.0, 1.0, 3.0], 1.0).unwrap(), 1.625, epsilon = 1e-15);
        assert!(matches!(
            dro_cvar(&[1.0, 2.0, 3.0], 0.5),
            Err(PaucError::CvarLevelNotIntegral { .. })
        ));
    }

    #[test]
    fn kl_examples() {
        assert_eq!(dro_kl(&[100.0, 100.0], 1.0).unwrap(), 100.0);
        assert_abs_diff_eq!(dro_kl(&[0.0, 2.0], 1e6).unwrap(), 1.0, epsilon = 1e-4);
        assert_abs_diff_eq!(dro_kl(&[0.0, 2.0], 1e-3).unwrap(), 2.0 - 1e-3 * 2f64.ln(), epsilon = 1e-9);
        assert!(dro_kl(&[1e3f64, -1e3, 5e2], 0.01).unwrap().is_finite());
        // f32 with losses near 4 and λ = 0.1 would overflow without max subtraction
        let v = dro_kl(&[4.0_f32, 3.9, 0.1], 0.1).unwrap();
        assert!(v.is_finite() && v <= 4.0);
    }

    #[test]
    fn variational_examples() {
        assert_eq!(cvar_variational(&[3.0, 1.0, 2.0], 1.0 / 3.0, 3.0), 3.0);
        assert_abs_diff_eq!(cvar_variational(&[3.0, 1.0, 2.0], 1.0 / 3.0, 2.0), 3.0, epsilon = 1e-15);
        assert_eq!(cvar_variational(&[3.0, 1.0, 2.0], 1.0, 0.0), 2.0);
    }

    fn one_positive() -> (ScoreModel<f64>, LabeledDataset<f64>) {
        // linear_raw with w = 1 on a single feature: scores equal features
        let model = ScoreModel::new(Arch::LinearRaw, 1, vec![1.0]).unwrap();
        // losses (1 - (0 - h_j))^2 for h_j = sqrt(3)-1, 0, sqrt(2)-1 -> 3, 1, 2
        let hs = [3f64.sqrt() - 1.0, 0.0, 2f64.sqrt() - 1.0];
        let data = LabeledDataset::new(1, vec![0.0, hs[0], hs[1], hs[2]], vec![1, -1, -1, -1]).unwrap();
        (model, data)
    }

    #[test]
    fn opauc_cvar_examples() {
        let (m, d) = one_positive();
        let loss = PairwiseLoss::squared_hinge(1.0);
        let v = opauc_cvar_min(&m, &d, &loss, 1.0 / 3.0).unwrap();
        assert_abs_diff_eq!(v, 3.0, epsilon = 1e-12);
        let s = opauc_cvar_argmin_s(&m, &d, &loss, 1.0 / 3.0).unwrap();
        let at_s = opauc_cvar_objective(&m, &d, &loss, 1.0 / 3.0, &s).unwrap();
        assert_abs_diff_eq!(at_s, v, epsilon = 1e-12);
        let (mean, _) = mean_pairwise_loss(&m, &d, &loss).unwrap();
        let full = opauc_cvar_objective(&m, &d, &loss, 1.0, &[0.0]).unwrap();
        assert_abs_diff_eq!(full, mean, epsilon = 1e-12);
        let topk = opauc_topk_surrogate(&m, &d, &loss, 1.0 / 3.0).unwrap();
        assert_abs_diff_eq!(topk, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn kl_objective_constant_losses() {
        // w = 0 on linear_sigmoid: every margin is 0, every loss is 1
        let m = ScoreModel::<f64>::zeros(Arch::LinearSigmoid, 2).unwrap();
        let d = LabeledDataset::new(2, vec![1.0, 0.0, 0.0, 1.0, 2.0, 2.0], vec![1, -1, -1]).unwrap();
        let loss = PairwiseLoss::squared_hinge(1.0);
        let (v, _) = opauc_kl_objective_and_grad(&m, &d, &loss, 0.3).unwrap();
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-14);
        let (v, _) = tpauc_kl_objective_and_grad(&m, &d, &loss, 0.3, 2.0).unwrap();
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn tpauc_cvar_selected_pairs() {
        let m = ScoreModel::new(Arch::LinearRaw, 1, vec![1.0]).unwrap();
        let d = LabeledDataset::new(
            1,
            vec![0.9, 0.6, 0.4, 0.5, 0.3, 0.2, 0.1],
            vec![1, 1, 1, -1, -1, -1, -1],
        )
        .unwrap();
        let loss = PairwiseLoss::squared_hinge(1.0);
        let v = tpauc_cvar_objective(&m, &d, &loss, 2.0 / 3.0, 0.5).unwrap();
        let expected = [0.1, 0.3, -0.1, 0.1].iter().map(|x: &f64| (1.0 - x).powi(2)).sum::<f64>() / 4.0;
        assert_abs_diff_eq!(v, expected, epsilon = 1e-12);
        let (mean, _) = mean_pairwise_loss(&m, &d, &loss).unwrap();
        assert_abs_diff_eq!(tpauc_cvar_objective(&m, &d, &loss, 1.0, 1.0).unwrap(), mean, epsilon = 1e-12);
        assert!(tpauc_cvar_objective(&m, &d, &loss, 0.5, 0.5).is_err());

        let sep = LabeledDataset::new(1, vec![3.0, 2.5, 0.5, 0.0], vec![1, 1, -1, -1]).unwrap();
        assert_eq!(tpauc_cvar_objective(&m, &sep, &loss, 0.5, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn tpauc_kl_flat_outer_power() {
        let m = ScoreModel::<f64>::init(Arch::LinearRaw, 2, 4).unwrap();
        let d = LabeledDataset::new(2, vec![1.0, 0.2, -0.3, 0.8, 0.5, -1.0, 0.0, 0.4], vec![1, 1, -1, -1]).unwrap();
        let loss = PairwiseLoss::squared_hinge(1.0);
        let lam = 0.7;
        let (v, _) = tpauc_kl_objective_and_grad(&m, &d, &loss, lam, lam).unwrap();
        let t = FullTables::compute(&m, &d).unwrap();
        let all: Vec<f64> = PairBlock::compute(&t.pos, &t.neg, &loss).loss;
        assert_abs_diff_eq!(v, dro_kl(&all, lam).unwrap(), epsilon = 1e-12);
    }
}
