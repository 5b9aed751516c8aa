use crate::data::Batch;
use crate::error::{PaucError, Result};
use crate::losses::weighted_pair_grad;
use crate::scalar::Scalar;

use super::{apply_update, OptimizerState, StepContext, StepHyper, StepOutput};

/// One SOPA step on the one-way CVaR objective.
///
/// Hinge indicators `p_ij = I(L_ij - s_i > 0)` are taken at the current
/// thresholds; only the sampled positives' thresholds move.
pub fn sopa_step<T: Scalar>(
    state: &mut OptimizerState<T>,
    hyper: &StepHyper<T>,
    ctx: &StepContext<'_, T>,
    batch: &Batch,
) -> Result<StepOutput<T>> {
    let n_pos = ctx.data.n_pos();
    if state.s.len() != n_pos {
        return Err(PaucError::DimensionMismatch { expected: n_pos, got: state.s.len() });
    }
    let slots = ctx.slots(batch)?;
    let terms = ctx.block(&state.w, batch, &hyper.loss)?;
    let b = &terms.block;
    let beta = hyper.beta_fpr;
    let s_old: Vec<T> = slots.iter().map(|&k| state.s[k]).collect();

    let scale = T::one() / (beta * T::from_count(b.n_pos) * T::from_count(b.n_neg));
    let grad = weighted_pair_grad(&terms.pos, &terms.neg, b, |i, j| {
        if b.loss[i * b.n_neg + j] - s_old[i] > T::zero() {
            scale
        } else {
            T::zero()
        }
    });

    let rate = hyper.eta2 / T::from_count(n_pos);
    let denom = beta * T::from_count(b.n_neg);
    for (i, &k) in slots.iter().enumerate() {
        let active = b.row(i).iter().filter(|&&l| l - s_old[i] > T::zero()).count();
        state.s[k] -= rate * (T::one() - T::from_count(active) / denom);
    }
    apply_update(state, &grad, hyper.eta1, hyper.gamma1, hyper.update_style, hyper);
    state.check_finite()?;
    Ok(StepOutput { grad })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Batch;
    use crate::optim::fixtures::{full_batch, scalar_data};
    use crate::optim::UpdateStyle;

    fn hyper(eta2: f64) -> StepHyper<f64> {
        StepHyper {
            eta1: 0.1,
            eta2,
            beta_fpr: 0.5,
            update_style: UpdateStyle::Sgd,
            ..StepHyper::default()
        }
    }

    // Positive at 0 and negatives chosen so the squared-hinge losses are `l`.
    fn negs_for(l: &[f64]) -> Vec<f64> {
        l.iter().map(|v| v.sqrt() - 1.0).collect()
    }

    #[test]
    fn inactive_hinges_only_move_thresholds() {
        let (model, data) = scalar_data(&[0.0, 5.0], &[-1.0, -2.0]);
        let ctx = StepContext::new(&model, &data);
        let mut st = OptimizerState::new(vec![1.0], 2);
        st.s = vec![100.0, 100.0];
        let out = sopa_step(&mut st, &hyper(0.1), &ctx, &full_batch(&data)).unwrap();
        assert_eq!(out.grad, vec![0.0]);
        assert_eq!(st.w, vec![1.0]);
        assert!((st.s[0] - (100.0 - 0.05)).abs() < 1e-12);
        assert!((st.s[1] - (100.0 - 0.05)).abs() < 1e-12);
    }

    #[test]
    fn balanced_threshold_is_unchanged() {
        let (model, data) = scalar_data(&[0.0, 0.0], &negs_for(&[1.69, 0.5]));
        let ctx = StepContext::new(&model, &data);
        let mut st = OptimizerState::new(vec![1.0], 2);
        st.s = vec![1.0, 7.0];
        let batch = Batch { pos: vec![0], neg: vec![2, 3] };
        sopa_step(&mut st, &hyper(0.1), &ctx, &batch).unwrap();
        assert!((st.s[0] - 1.0).abs() < 1e-15);
        // the unsampled positive keeps its threshold
        assert_eq!(st.s[1], 7.0);
    }

    #[test]
    fn over_active_threshold_rises() {
        let (model, data) = scalar_data(&[0.0, 0.0], &negs_for(&[1.69, 1.2]));
        let ctx = StepContext::new(&model, &data);
        let mut st = OptimizerState::new(vec![1.0], 2);
        st.s = vec![1.0, 1.0];
        let batch = Batch { pos: vec![0], neg: vec![2, 3] };
        sopa_step(&mut st, &hyper(0.1), &ctx, &batch).unwrap();
        assert!((st.s[0] - 1.05).abs() < 1e-12);
    }

    #[test]
    fn full_batch_gradient_matches_objective_subgradient() {
        let (model, data) = scalar_data(&[0.3, -0.2, 1.1], &[0.0, 0.5, -0.4, 0.9]);
        let ctx = StepContext::new(&model, &data);
        let s = vec![0.4, 1.0, 0.1];
        let mut st = OptimizerState::new(vec![1.0], 3);
        st.s = s.clone();
        let h = hyper(0.1);
        let out = sopa_step(&mut st, &h, &ctx, &full_batch(&data)).unwrap();
        let (_, gw, _) =
            crate::losses::opauc_cvar_grad(&model, &data, &h.loss, h.beta_fpr, &s).unwrap();
        assert!((out.grad[0] - gw[0]).abs() < 1e-12);
    }
}
