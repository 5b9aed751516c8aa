use log::warn;

use crate::data::Batch;
use crate::error::Result;
use crate::losses::{weighted_pair_grad, PairBlock};
use crate::metrics::{ascending_order, descending_order};
use crate::model::ScoreTable;
use crate::scalar::{sigmoid, CompensatedSum, Scalar};

use super::{apply_bias_update, apply_update, OptimizerState, StepContext, StepHyper, StepOutput};

/// Which in-batch pairs the naive mini-batch baseline keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MbMode {
    /// Top `mb_neg_frac` negatives by score.
    Opauc,
    /// Additionally the bottom `mb_pos_frac` positives.
    Tpauc,
}

fn keep_count<T: Scalar>(n: usize, frac: T) -> usize {
    ((n as f64) * frac.to_f64_lossy() + 1e-9).floor() as usize
}

/// Mean pairwise loss gradient over a hard subset of the batch.
///
/// A fraction of 1 keeps every pair, which makes this the plain full-AUC
/// pairwise step. An empty selection falls back to the whole batch.
pub fn mb_baseline_step<T: Scalar>(
    state: &mut OptimizerState<T>,
    hyper: &StepHyper<T>,
    ctx: &StepContext<'_, T>,
    batch: &Batch,
    mode: MbMode,
) -> Result<StepOutput<T>> {
    let (pos, neg) = ctx.tables(&state.w, batch)?;
    let mut k_neg = keep_count(neg.len(), hyper.mb_neg_frac);
    let mut k_pos = match mode {
        MbMode::Opauc => pos.len(),
        MbMode::Tpauc => keep_count(pos.len(), hyper.mb_pos_frac),
    };
    if k_neg == 0 || k_pos == 0 {
        warn!(
            "mini-batch selection is empty ({k_pos} positives x {k_neg} negatives); using the whole batch"
        );
        k_neg = neg.len();
        k_pos = pos.len();
    }
    let neg_keep = &descending_order(&neg.scores)[..k_neg];
    let pos_keep = &ascending_order(&pos.scores)[..k_pos];
    let pos_sel = select(&pos, pos_keep);
    let neg_sel = select(&neg, neg_keep);
    let block = PairBlock::compute(&pos_sel, &neg_sel, &hyper.loss);
    let w = T::one() / T::from_count(k_pos * k_neg);
    let grad = weighted_pair_grad(&pos_sel, &neg_sel, &block, |_, _| w);
    apply_update(state, &grad, hyper.eta1, hyper.gamma1, hyper.update_style, hyper);
    state.check_finite()?;
    Ok(StepOutput { grad })
}

fn select<T: Scalar>(table: &ScoreTable<T>, keep: &[usize]) -> ScoreTable<T> {
    let mut grads = Vec::with_capacity(keep.len() * table.num_params);
    for &k in keep {
        grads.extend_from_slice(table.grad(k));
    }
    ScoreTable {
        scores: keep.iter().map(|&k| table.scores[k]).collect(),
        grads,
        num_params: table.num_params,
    }
}

/// Binary cross-entropy on `logit + bias`, with the batch's class means
/// weighted by the training-set class priors so the estimator is unbiased
/// for the full-data mean. The intercept lives in `state.bias`; it does
/// not change rankings, so the scoring model stays bias-free.
pub fn ce_step<T: Scalar>(
    state: &mut OptimizerState<T>,
    hyper: &StepHyper<T>,
    ctx: &StepContext<'_, T>,
    batch: &Batch,
) -> Result<StepOutput<T>> {
    let model = ctx.model.with_params(&state.w)?;
    let n = T::from_count(ctx.data.len());
    let wp = T::from_count(ctx.data.n_pos()) / n / T::from_count(batch.pos.len());
    let wn = T::from_count(ctx.data.n_neg()) / n / T::from_count(batch.neg.len());
    let bias = state.bias;
    let mut acc: Vec<CompensatedSum<T>> = vec![CompensatedSum::new(); state.w.len()];
    let mut acc_bias = CompensatedSum::new();
    let mut push = |id: usize, coef: T| -> Result<()> {
        let (z, g) = model.logit_and_grad(ctx.data.row(id))?;
        let c = coef * sigmoid(z + bias);
        let c = if ctx.data.labels()[id] > 0 { c - coef } else { c };
        for (a, &gk) in acc.iter_mut().zip(&g) {
            a.add(c * gk);
        }
        acc_bias.add(c);
        Ok(())
    };
    if batch.pos.is_empty() || batch.neg.is_empty() {
        return Err(crate::error::PaucError::EmptyBatch);
    }
    for &i in &batch.pos {
        push(i, wp)?;
    }
    for &j in &batch.neg {
        push(j, wn)?;
    }
    let grad: Vec<T> = acc.iter().map(|a| a.value()).collect();
    let grad_bias = acc_bias.value();
    apply_update(state, &grad, hyper.eta1, hyper.gamma1, hyper.update_style, hyper);
    apply_bias_update(state, grad_bias, hyper.eta1, hyper.gamma1, hyper.update_style, hyper);
    state.check_finite()?;
    Ok(StepOutput { grad })
}

/// Full-data mean binary cross-entropy at intercept `bias`.
pub(crate) fn ce_objective<T: Scalar>(
    model: &crate::model::ScoreModel<T>,
    data: &crate::data::LabeledDataset<T>,
    bias: T,
) -> Result<T> {
    let mut acc = CompensatedSum::new();
    for i in 0..data.len() {
        let (z, _) = model.logit_and_grad(data.row(i))?;
        let z = z + bias;
        let signed = if data.labels()[i] > 0 { -z } else { z };
        acc.add(crate::scalar::softplus(signed));
    }
    Ok(acc.value() / T::from_count(data.len()))
}
