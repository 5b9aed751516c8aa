use crate::data::Batch;
use crate::error::{PaucError, Result};
use crate::losses::{weighted_pair_grad, PairBlock};
use crate::scalar::{cmean, Scalar};

use super::{apply_update, OptimizerState, StepContext, StepHyper, StepOutput, TRACKER_FLOOR};

/// `exp(L_ij / λ)` over the block, rejecting overflow.
pub(crate) fn exp_block<T: Scalar>(b: &PairBlock<T>, lambda: T) -> Result<Vec<T>> {
    let e: Vec<T> = b.loss.iter().map(|&l| (l / lambda).exp()).collect();
    if e.iter().any(|v| !v.is_finite()) {
        return Err(PaucError::NonFinite(format!(
            "exp(L/lambda) overflowed (lambda = {lambda}); reduce the loss scale or raise lambda"
        )));
    }
    Ok(e)
}

/// One SOPA-s step on the one-way KL objective.
///
/// The tracker `u_i` is updated first and the importance weights divide by
/// the updated value, floored at [`TRACKER_FLOOR`].
pub fn sopa_s_step<T: Scalar>(
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
    let g0 = hyper.gamma0;
    let floor = T::lit(TRACKER_FLOOR);

    let mut u_now = Vec::with_capacity(slots.len());
    for (i, &k) in slots.iter().enumerate() {
        let mean = cmean(&e[i * b.n_neg..(i + 1) * b.n_neg]);
        let mut u = (T::one() - g0) * state.u[k] + g0 * mean;
        if u < floor {
            u = floor;
            state.floor_hits += 1;
        }
        state.u[k] = u;
        u_now.push(u);
    }

    let pairs = T::from_count(b.n_pos) * T::from_count(b.n_neg);
    let grad = weighted_pair_grad(&terms.pos, &terms.neg, b, |i, j| e[i * b.n_neg + j] / u_now[i] / pairs);
    apply_update(state, &grad, hyper.eta1, hyper.gamma1, hyper.update_style, hyper);
    state.check_finite()?;
    Ok(StepOutput { grad })
}
