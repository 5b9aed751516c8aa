//! Stochastic optimizers for the robust pAUC objectives and the baselines
//! they are compared against.
//!
//! Each optimizer is an explicit step function that mutates an
//! [`OptimizerState`] given one [`Batch`]; [`train::run_training`] wraps
//! them in an epoch loop.

mod baselines;
mod moreau;
mod sopa;
mod sopa_s;
mod sota;
mod sota_s;
pub mod train;

pub use baselines::{ce_step, mb_baseline_step, MbMode};
pub use moreau::{moreau_stationarity_estimate, MoreauEstimate};
pub use sopa::sopa_step;
pub use sopa_s::sopa_s_step;
pub use sota::{rho_estimate_linear, sota_run, sota_stage, sota_step, SotaAnchor, SotaSchedule, SotaStageReport};
pub use sota_s::sota_s_step;
pub use train::{run_training, EpochRow, EvalMetrics, MetricReport, TrainConfig};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{Batch, LabeledDataset};
use crate::error::{PaucError, Result};
use crate::losses::{PairBlock, PairwiseLoss};
use crate::model::{ScoreModel, ScoreTable};
use crate::scalar::{norm2, Scalar};

/// Floor applied to moving-average trackers before they are used as divisors.
pub const TRACKER_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateStyle {
    /// `w -= η ∇`
    Sgd,
    /// `m = (1-γ) m + γ ∇; w -= η m`
    Momentum,
    /// Bias-corrected Adam with first-moment mixing γ. With `normalize` off
    /// the second moment is ignored and the step equals [`UpdateStyle::Momentum`].
    Adam { normalize: bool },
}

impl UpdateStyle {
    pub fn adam() -> Self {
        UpdateStyle::Adam { normalize: true }
    }
}

impl FromStr for UpdateStyle {
    type Err = PaucError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "sgd" => Ok(UpdateStyle::Sgd),
            "momentum" => Ok(UpdateStyle::Momentum),
            "adam" => Ok(UpdateStyle::adam()),
            "adam-nonorm" => Ok(UpdateStyle::Adam { normalize: false }),
            other => Err(PaucError::invalid("update_style", format!("unknown style `{other}`"))),
        }
    }
}

impl fmt::Display for UpdateStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UpdateStyle::Sgd => "sgd",
            UpdateStyle::Momentum => "momentum",
            UpdateStyle::Adam { normalize: true } => "adam",
            UpdateStyle::Adam { normalize: false } => "adam-nonorm",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerTag {
    Sopa,
    SopaS,
    SotaS,
    Sota,
    Ce,
    Auc,
    MbOpauc,
    MbTpauc,
}

impl OptimizerTag {
    pub const ALL: [OptimizerTag; 8] = [
        OptimizerTag::Sopa,
        OptimizerTag::SopaS,
        OptimizerTag::SotaS,
        OptimizerTag::Sota,
        OptimizerTag::Ce,
        OptimizerTag::Auc,
        OptimizerTag::MbOpauc,
        OptimizerTag::MbTpauc,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            OptimizerTag::Sopa => "sopa",
            OptimizerTag::SopaS => "sopa-s",
            OptimizerTag::SotaS => "sota-s",
            OptimizerTag::Sota => "sota",
            OptimizerTag::Ce => "ce",
            OptimizerTag::Auc => "auc",
            OptimizerTag::MbOpauc => "mb-opauc",
            OptimizerTag::MbTpauc => "mb-tpauc",
        }
    }
}

impl FromStr for OptimizerTag {
    type Err = PaucError;
    fn from_str(s: &str) -> Result<Self> {
        OptimizerTag::ALL
            .into_iter()
            .find(|t| t.name() == s.trim())
            .ok_or_else(|| PaucError::invalid("optimizer", format!("unknown optimizer `{s}`")))
    }
}

impl fmt::Display for OptimizerTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Step sizes, mixing rates and levels shared by all optimizers. Fields an
/// optimizer does not use are ignored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepHyper<T> {
    /// Model step size (η₁, or η for SOPA-s/SOTA-s).
    pub eta1: T,
    /// Threshold step size for `s`.
    pub eta2: T,
    /// Outer threshold step size for π (SOTA).
    pub eta3: T,
    /// Dual ascent step size for `u` (SOTA).
    pub eta4: T,
    /// Tracker mixing for `u`.
    pub gamma0: T,
    /// Tracker mixing for `v` (SOTA-s) or momentum mixing (everything else).
    pub gamma1: T,
    /// Momentum mixing for SOTA-s.
    pub gamma2: T,
    pub beta_fpr: T,
    pub alpha_tpr: T,
    pub lambda: T,
    pub lambda_prime: T,
    /// Proximal parameter γ of the stagewise min-max solver; needs `1/γ >= ρ`.
    pub prox_gamma: T,
    pub batch_pos: usize,
    pub batch_neg: usize,
    pub update_style: UpdateStyle,
    pub weight_decay: T,
    pub adam_beta2: T,
    pub adam_eps: T,
    /// Share of the in-batch negatives kept by the MB baseline.
    pub mb_neg_frac: T,
    /// Share of the in-batch positives kept by the two-way MB baseline.
    pub mb_pos_frac: T,
    pub loss: PairwiseLoss<T>,
}

impl<T: Scalar> Default for StepHyper<T> {
    fn default() -> Self {
        Self {
            eta1: T::lit(1e-2),
            eta2: T::lit(1e-1),
            eta3: T::lit(1e-2),
            eta4: T::lit(1e-2),
            gamma0: T::lit(0.9),
            gamma1: T::lit(0.9),
            gamma2: T::lit(0.1),
            beta_fpr: T::lit(0.3),
            alpha_tpr: T::lit(0.5),
            lambda: T::one(),
            lambda_prime: T::one(),
            prox_gamma: T::lit(0.1),
            batch_pos: 32,
            batch_neg: 32,
            update_style: UpdateStyle::adam(),
            weight_decay: T::zero(),
            adam_beta2: T::lit(0.999),
            adam_eps: T::lit(1e-8),
            mb_neg_frac: T::lit(0.3),
            mb_pos_frac: T::lit(0.5),
            loss: PairwiseLoss::squared_hinge(T::one()),
        }
    }
}

impl<T: Scalar> StepHyper<T> {
    pub fn validate(&self) -> Result<()> {
        let pos = |name: &'static str, x: T| {
            if x > T::zero() && x.is_finite() {
                Ok(())
            } else {
                Err(PaucError::invalid(name, "must be positive"))
            }
        };
        let unit = |name: &'static str, x: T| {
            if x >= T::zero() && x <= T::one() {
                Ok(())
            } else {
                Err(PaucError::invalid(name, "must lie in [0, 1]"))
            }
        };
        let level = |name: &'static str, x: T| {
            if x > T::zero() && x <= T::one() {
                Ok(())
            } else {
                Err(PaucError::invalid(name, "must lie in (0, 1]"))
            }
        };
        pos("eta1", self.eta1)?;
        pos("eta2", self.eta2)?;
        pos("eta3", self.eta3)?;
        pos("eta4", self.eta4)?;
        unit("gamma0", self.gamma0)?;
        unit("gamma1", self.gamma1)?;
        unit("gamma2", self.gamma2)?;
        level("beta_fpr", self.beta_fpr)?;
        level("alpha_tpr", self.alpha_tpr)?;
        level("mb_neg_frac", self.mb_neg_frac)?;
        level("mb_pos_frac", self.mb_pos_frac)?;
        pos("lambda", self.lambda)?;
        pos("lambda_prime", self.lambda_prime)?;
        pos("prox_gamma", self.prox_gamma)?;
        if self.weight_decay < T::zero() {
            return Err(PaucError::invalid("weight_decay", "must be non-negative"));
        }
        if self.batch_pos == 0 || self.batch_neg == 0 {
            return Err(PaucError::invalid("batch", "batch sizes must be positive"));
        }
        Ok(())
    }

    /// Batch sizes must not exceed class sizes.
    pub fn validate_for<D: Scalar>(&self, data: &LabeledDataset<D>) -> Result<()> {
        self.validate()?;
        data.require_both_classes()?;
        if self.batch_pos > data.n_pos() || self.batch_neg > data.n_neg() {
            return Err(PaucError::invalid(
                "batch",
                format!(
                    "batch sizes ({}, {}) exceed class sizes ({}, {})",
                    self.batch_pos,
                    self.batch_neg,
                    data.n_pos(),
                    data.n_neg()
                ),
            ));
        }
        Ok(())
    }
}

/// Mutable per-run state.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub w: Vec<T>,
    /// Per-positive thresholds, indexed by positive slot.
    pub s: Vec<T>,
    /// Per-positive trackers (SOPA-s / SOTA-s) or duals in `[0,1]` (SOTA).
    pub u: Vec<T>,
    /// Inner-mean tracker (SOTA-s).
    pub v: T,
    /// First moment / momentum buffer.
    pub mom: Vec<T>,
    /// Adam second moment.
    pub second: Vec<T>,
    /// Outer threshold (SOTA).
    pub pi: T,
    /// Logit intercept of the cross-entropy baseline; scores ignore it.
    pub bias: T,
    /// Moments of `bias`, updated with the same rule as `w`.
    pub bias_mom: T,
    pub bias_second: T,
    pub step_count: u64,
    /// Number of times a tracker hit [`TRACKER_FLOOR`].
    pub floor_hits: u64,
}

impl<T: Scalar> OptimizerState<T> {
    /// `s = 0`, `u = 0`, `v = 0`, zero moments.
    pub fn new(w: Vec<T>, n_pos: usize) -> Self {
        let p = w.len();
        Self {
            w,
            s: vec![T::zero(); n_pos],
            u: vec![T::zero(); n_pos],
            v: T::zero(),
            mom: vec![T::zero(); p],
            second: vec![T::zero(); p],
            pi: T::zero(),
            bias: T::zero(),
            bias_mom: T::zero(),
            bias_second: T::zero(),
            step_count: 0,
            floor_hits: 0,
        }
    }

    /// Initial state of the stagewise min-max solver: duals start at 1.
    pub fn for_sota(w: Vec<T>, n_pos: usize) -> Self {
        let mut st = Self::new(w, n_pos);
        st.u.iter_mut().for_each(|u| *u = T::one());
        st
    }

    pub fn check_finite(&self) -> Result<()> {
        let bad = |xs: &[T]| xs.iter().any(|x| !x.is_finite());
        if bad(&self.w) || bad(&self.s) || bad(&self.u) || !self.v.is_finite() || !self.pi.is_finite() || !self.bias.is_finite() {
            return Err(PaucError::NonFinite(format!(
                "optimizer state after step {}: |w|={}, v={}, pi={}",
                self.step_count,
                norm2(&self.w),
                self.v,
                self.pi
            )));
        }
        Ok(())
    }
}

/// Model architecture and training data a step runs against.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a, T> {
    pub model: &'a ScoreModel<T>,
    pub data: &'a LabeledDataset<T>,
}

impl<'a, T: Scalar> StepContext<'a, T> {
    pub fn new(model: &'a ScoreModel<T>, data: &'a LabeledDataset<T>) -> Self {
        Self { model, data }
    }

    pub(crate) fn slots(&self, batch: &Batch) -> Result<Vec<usize>> {
        batch
            .pos
            .iter()
            .map(|&id| {
                self.data
                    .pos_slot(id)
                    .ok_or_else(|| PaucError::invalid("batch", format!("id {id} is not a positive example")))
            })
            .collect()
    }

    /// Score tables for the batch evaluated at parameters `w`.
    pub(crate) fn tables(&self, w: &[T], batch: &Batch) -> Result<(ScoreTable<T>, ScoreTable<T>)> {
        if batch.pos.is_empty() || batch.neg.is_empty() {
            return Err(PaucError::EmptyBatch);
        }
        if batch.neg.iter().any(|&j| self.data.labels().get(j) != Some(&-1)) {
            return Err(PaucError::invalid("batch", "negative batch contains a non-negative id"));
        }
        let model = self.model.with_params(w)?;
        Ok((
            ScoreTable::compute(&model, self.data, &batch.pos)?,
            ScoreTable::compute(&model, self.data, &batch.neg)?,
        ))
    }

    pub(crate) fn block(&self, w: &[T], batch: &Batch, loss: &PairwiseLoss<T>) -> Result<BatchTerms<T>> {
        let (pos, neg) = self.tables(w, batch)?;
        let block = PairBlock::compute(&pos, &neg, loss);
        Ok(BatchTerms { pos, neg, block })
    }
}

pub(crate) struct BatchTerms<T> {
    pub pos: ScoreTable<T>,
    pub neg: ScoreTable<T>,
    pub block: PairBlock<T>,
}

/// What a step computed, for logging and for tests.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput<T> {
    /// The stochastic gradient estimator ∇_t (before momentum / Adam).
    pub grad: Vec<T>,
}

/// Applies weight decay and the configured update rule to `state.w`.
/// `mix` is the first-moment mixing rate on the new gradient.
pub fn apply_update<T: Scalar>(
    state: &mut OptimizerState<T>,
    grad: &[T],
    eta: T,
    mix: T,
    style: UpdateStyle,
    hyper: &StepHyper<T>,
) {
    state.step_count += 1;
    let wd = hyper.weight_decay;
    let g: Vec<T> = grad.iter().zip(&state.w).map(|(&g, &w)| g + wd * w).collect();
    let t = state.step_count;
    update_rule(&mut state.w, &mut state.mom, &mut state.second, &g, eta, mix, style, hyper, t);
}

/// Same rule as [`apply_update`] for the cross-entropy intercept, without
/// weight decay and without advancing the step counter.
pub(crate) fn apply_bias_update<T: Scalar>(
    state: &mut OptimizerState<T>,
    grad: T,
    eta: T,
    mix: T,
    style: UpdateStyle,
    hyper: &StepHyper<T>,
) {
    let (mut b, mut m, mut s) = ([state.bias], [state.bias_mom], [state.bias_second]);
    update_rule(&mut b, &mut m, &mut s, &[grad], eta, mix, style, hyper, state.step_count);
    (state.bias, state.bias_mom, state.bias_second) = (b[0], m[0], s[0]);
}

#[allow(clippy::too_many_arguments)]
fn update_rule<T: Scalar>(
    w: &mut [T],
    mom: &mut [T],
    second: &mut [T],
    g: &[T],
    eta: T,
    mix: T,
    style: UpdateStyle,
    hyper: &StepHyper<T>,
    step: u64,
) {
    let keep = T::one() - mix;
    if !matches!(style, UpdateStyle::Sgd) && mix > T::zero() {
        for (m, &gk) in mom.iter_mut().zip(g) {
            *m = keep * *m + mix * gk;
        }
    }
    match style {
        UpdateStyle::Sgd => {
            for (w, &gk) in w.iter_mut().zip(g) {
                *w -= eta * gk;
            }
        }
        UpdateStyle::Momentum | UpdateStyle::Adam { normalize: false } => {
            for (w, &m) in w.iter_mut().zip(mom.iter()) {
                *w -= eta * m;
            }
        }
        UpdateStyle::Adam { normalize: true } => {
            let b2 = hyper.adam_beta2;
            for (s, &gk) in second.iter_mut().zip(g) {
                *s = b2 * *s + (T::one() - b2) * gk * gk;
            }
            let t = step.min(i32::MAX as u64) as i32;
            let c1 = T::one() - keep.powi(t);
            let c1 = if c1 > T::zero() { c1 } else { T::one() };
            let c2 = T::one() - b2.powi(t);
            let c2 = if c2 > T::zero() { c2 } else { T::one() };
            for ((w, &m), &s) in w.iter_mut().zip(mom.iter()).zip(second.iter()) {
                *w -= eta * (m / c1) / ((s / c2).sqrt() + hyper.adam_eps);
            }
        }
    }
}
