use crate::data::Batch;
use crate::error::{PaucError, Result};
use crate::losses::weighted_pair_grad;
use crate::scalar::{csum, Scalar};

use super::sopa_s::exp_block;
use super::{apply_update, OptimizerState, StepContext, StepHyper, StepOutput, TRACKER_FLOOR};

/// One SOTA-s step on the two-way KL objective.
///
/// `u_i` tracks `E_j exp(L_ij/λ)` and `v` tracks the mean of `u_i^{λ/λ′}`.
/// Both the `v` update and the weights use the tracker value from before
/// this step; a positive that has never been visited (tracker still 0)
/// falls back to the freshly updated value instead of dividing by zero.
pub fn sota_s_step<T: Scalar>(
    state: &mut OptimizerState<T>,
    hyper: &StepHyper<T>,
    ctx: &StepContext<'_, T>,
    batch: &Batch,
) -> Result<StepOutput<T>> {
    let n_pos = ctx.data.n_pos();
    if state.u.len() != n_pos {
        return Err(PaucError::DimensionMismatch { expected: n_pos, got: state.u.len() });
    }
    let slots = ctx.slots(batch)?;
    let terms = ctx.block(&state.w, batch, &hyper.loss)?;
    let b = &terms.block;
    let e = exp_block(b, hyper.lambda)?;
    let r = hyper.lambda / hyper.lambda_prime;
    let floor = T::lit(TRACKER_FLOOR);
    let g0 = hyper.gamma0;

    let mut u_prev = Vec::with_capacity(slots.len());
    for (i, &k) in slots.iter().enumerate() {
        let mean = csum(e[i * b.n_neg..(i + 1) * b.n_neg].iter().copied()) / T::from_count(b.n_neg);
        let old = state.u[k];
        let mut new = (T::one() - g0) * old + g0 * mean;
        if new < floor {
            new = floor;
            state.floor_hits += 1;
        }
        state.u[k] = new;
        u_prev.push(if old > T::zero() { old } else { new });
    }

    let f2_mean = csum(u_prev.iter().map(|&u| u.powf(r))) / T::from_count(u_prev.len());
    let g1 = hyper.gamma1;
    let mut v = (T::one() - g1) * state.v + g1 * f2_mean;
    if v < floor {
        v = floor;
        state.floor_hits += 1;
    }
    state.v = v;

    let pairs = T::from_count(b.n_pos) * T::from_count(b.n_neg);
    let row_scale: Vec<T> = u_prev.iter().map(|&u| u.powf(r - T::one()) / v / pairs).collect();
    let grad = weighted_pair_grad(&terms.pos, &terms.neg, b, |i, j| row_scale[i] * e[i * b.n_neg + j]);
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(PaucError::NonFinite(format!(
            "gradient estimator at step {} (v = {v})",
            state.step_count + 1
        )));
    }
    apply_update(state, &grad, hyper.eta1, hyper.gamma2, hyper.update_style, hyper);
    state.check_finite()?;
    Ok(StepOutput { grad })
}
