use log::debug;

use crate::data::{Batch, BatchSampler, LabeledDataset};
use crate::error::{PaucError, Result};
use crate::losses::{integral_count, tpauc_cvar_objective, weighted_pair_grad, PairwiseLoss};
use crate::model::Arch;
use crate::scalar::{csum, Scalar};

use super::{OptimizerState, StepContext, StepHyper, StepOutput};

/// Stage lengths `T_k = ceil(base * n_+^[scale_by_n_pos] * k^2)` for
/// `k = 1..=stages`, with step sizes `η_i / k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SotaSchedule {
    pub stages: usize,
    pub base: f64,
    pub scale_by_n_pos: bool,
}

impl SotaSchedule {
    pub fn iters(&self, stage: usize, n_pos: usize) -> usize {
        let k = stage as f64;
        let n = if self.scale_by_n_pos { n_pos as f64 } else { 1.0 };
        (self.base * n * k * k).ceil() as usize
    }

    pub fn validate(&self, n_pos: usize) -> Result<()> {
        if self.stages == 0 {
            return Err(PaucError::InfeasibleSchedule("zero stages".into()));
        }
        if !(self.base > 0.0) || self.iters(1, n_pos) == 0 {
            return Err(PaucError::InfeasibleSchedule(format!(
                "first stage has no iterations (base = {})",
                self.base
            )));
        }
        Ok(())
    }
}

/// Proximal centre of the current stage.
#[derive(Debug, Clone, PartialEq)]
pub struct SotaAnchor<T> {
    pub w: Vec<T>,
    pub s: Vec<T>,
    pub pi: T,
}

impl<T: Scalar> SotaAnchor<T> {
    pub fn from_state(state: &OptimizerState<T>) -> Self {
        Self { w: state.w.clone(), s: state.s.clone(), pi: state.pi }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SotaStageReport {
    pub stage: usize,
    pub iters: usize,
    /// Two-way CVaR objective at the stage-averaged model.
    pub objective: f64,
    pub pi: f64,
    pub u_min: f64,
    pub u_max: f64,
    /// Steps after which some dual left `[0, 1]`.
    pub dual_violations: usize,
}

/// `ρ = L_s / (αβ)` with `L_s = ℓ'' · max‖x_i − x_j‖²` for a linear score.
pub fn rho_estimate_linear<T: Scalar>(data: &LabeledDataset<T>, loss: &PairwiseLoss<T>, alpha: T, beta: T) -> T {
    let d = data.max_pair_distance();
    loss.smoothness() * d * d / (alpha * beta)
}

/// Minimizer of `x g + |x - x_t|²/(2η) + |x - x_0|²/(2γ)`.
#[inline]
pub(crate) fn prox_linear<T: Scalar>(xt: T, x0: T, g: T, eta: T, gamma: T) -> T {
    (xt / eta + x0 / gamma - g) / (T::one() / eta + T::one() / gamma)
}

/// One primal-dual step of the stagewise min-max solver. `etas` are the
/// stage's `(η₁, η₂, η₃, η₄)`. Only the sampled coordinates of `s` and `u`
/// move.
pub fn sota_step<T: Scalar>(
    state: &mut OptimizerState<T>,
    anchor: &SotaAnchor<T>,
    etas: [T; 4],
    hyper: &StepHyper<T>,
    ctx: &StepContext<'_, T>,
    batch: &Batch,
) -> Result<StepOutput<T>> {
    let n_pos = ctx.data.n_pos();
    if state.s.len() != n_pos || state.u.len() != n_pos {
        return Err(PaucError::DimensionMismatch { expected: n_pos, got: state.s.len().min(state.u.len()) });
    }
    let slots = ctx.slots(batch)?;
    let terms = ctx.block(&state.w, batch, &hyper.loss)?;
    let b = &terms.block;
    let (alpha, beta) = (hyper.alpha_tpr, hyper.beta_fpr);
    let (bp, bn) = (T::from_count(b.n_pos), T::from_count(b.n_neg));
    let s: Vec<T> = slots.iter().map(|&k| state.s[k]).collect();
    let u: Vec<T> = slots.iter().map(|&k| state.u[k]).collect();
    let pi = state.pi;

    let scale_w = T::one() / (bp * bn * alpha * beta);
    let g_w = weighted_pair_grad(&terms.pos, &terms.neg, b, |i, j| {
        if b.loss[i * b.n_neg + j] - s[i] > T::zero() {
            u[i] * scale_w
        } else {
            T::zero()
        }
    });
    let mut g_s = Vec::with_capacity(slots.len());
    let mut g_u = Vec::with_capacity(slots.len());
    for i in 0..b.n_pos {
        let row = b.row(i);
        let active = row.iter().filter(|&&l| l - s[i] > T::zero()).count();
        let excess = csum(row.iter().map(|&l| (l - s[i]).max(T::zero())));
        g_s.push(u[i] / (alpha * bp) * (T::one() - T::from_count(active) / (bn * beta)));
        g_u.push((s[i] - pi + excess / (bn * beta)) / (alpha * bp));
    }
    let g_pi = T::one() - csum(u.iter().copied()) / (bp * alpha);

    let [e1, e2, e3, e4] = etas;
    let gamma = hyper.prox_gamma;
    for ((w, &w0), &g) in state.w.iter_mut().zip(&anchor.w).zip(&g_w) {
        *w = prox_linear(*w, w0, g, e1, gamma);
    }
    for (i, &k) in slots.iter().enumerate() {
        state.s[k] = prox_linear(s[i], anchor.s[k], g_s[i], e2, gamma);
        state.u[k] = (u[i] + e4 * g_u[i]).max(T::zero()).min(T::one());
    }
    state.pi = prox_linear(pi, anchor.pi, g_pi, e3, gamma);
    state.step_count += 1;
    state.check_finite()?;
    Ok(StepOutput { grad: g_w })
}

/// Runs the stagewise proximal primal-dual solver for the two-way CVaR
/// objective. `rho` is the weak-convexity estimate the prox parameter is
/// checked against (`1/γ ≥ ρ`); pass `None` to skip the check.
pub fn sota_run<T: Scalar>(
    state: &mut OptimizerState<T>,
    hyper: &StepHyper<T>,
    ctx: &StepContext<'_, T>,
    schedule: &SotaSchedule,
    sampler: &mut BatchSampler,
    rho: Option<T>,
) -> Result<Vec<SotaStageReport>> {
    hyper.validate_for(ctx.data)?;
    let n_pos = ctx.data.n_pos();
    schedule.validate(n_pos)?;
    integral_count(n_pos, hyper.alpha_tpr.to_f64_lossy())?;
    integral_count(ctx.data.n_neg(), hyper.beta_fpr.to_f64_lossy())?;
    if let Some(rho) = rho {
        check_prox_gamma(hyper.prox_gamma, rho)?;
    }

    let mut queue: Vec<Batch> = Vec::new();
    let mut reports = Vec::with_capacity(schedule.stages);
    for k in 1..=schedule.stages {
        let iters = schedule.iters(k, n_pos);
        let mut batches = Vec::with_capacity(iters);
        while batches.len() < iters {
            if queue.is_empty() {
                queue = sampler.next_epoch();
                queue.reverse();
            }
            batches.push(queue.pop().expect("sampler yields at least one batch per epoch"));
        }
        reports.push(sota_stage(state, hyper, ctx, k, &batches)?);
    }
    Ok(reports)
}

/// Stage `k` (1-based) of the stagewise solver over the given batches:
/// step sizes `η_i / k`, prox centre at the incoming state, and the state
/// replaced by the average of the stage's iterates at the end.
pub fn sota_stage<T: Scalar>(
    state: &mut OptimizerState<T>,
    hyper: &StepHyper<T>,
    ctx: &StepContext<'_, T>,
    k: usize,
    batches: &[Batch],
) -> Result<SotaStageReport> {
    if k == 0 || batches.is_empty() {
        return Err(PaucError::InfeasibleSchedule(format!("stage {k} with {} iterations", batches.len())));
    }
    let n_pos = ctx.data.n_pos();
    let kk = T::from_count(k);
    let etas = [hyper.eta1 / kk, hyper.eta2 / kk, hyper.eta3 / kk, hyper.eta4 / kk];
    let anchor = SotaAnchor::from_state(state);
    let mut w_sum = vec![T::zero(); state.w.len()];
    let mut s_sum = vec![T::zero(); n_pos];
    let mut u_sum = vec![T::zero(); n_pos];
    let mut pi_sum = T::zero();
    let mut dual_violations = 0;
    for batch in batches {
        sota_step(state, &anchor, etas, hyper, ctx, batch)?;
        if state.u.iter().any(|&u| !(u >= T::zero() && u <= T::one())) {
            dual_violations += 1;
        }
        add_into(&mut w_sum, &state.w);
        add_into(&mut s_sum, &state.s);
        add_into(&mut u_sum, &state.u);
        pi_sum += state.pi;
    }
    let n = T::from_count(batches.len());
    state.w = w_sum.into_iter().map(|x| x / n).collect();
    state.s = s_sum.into_iter().map(|x| x / n).collect();
    state.u = u_sum.into_iter().map(|x| (x / n).max(T::zero()).min(T::one())).collect();
    state.pi = pi_sum / n;
    state.check_finite()?;

    let model = ctx.model.with_params(&state.w)?;
    let objective = tpauc_cvar_objective(&model, ctx.data, &hyper.loss, hyper.alpha_tpr, hyper.beta_fpr)?;
    let report = SotaStageReport {
        stage: k,
        iters: batches.len(),
        objective: objective.to_f64_lossy(),
        pi: state.pi.to_f64_lossy(),
        u_min: state.u.iter().map(|u| u.to_f64_lossy()).fold(f64::INFINITY, f64::min),
        u_max: state.u.iter().map(|u| u.to_f64_lossy()).fold(f64::NEG_INFINITY, f64::max),
        dual_violations,
    };
    debug!("sota stage {k}: {} iters, objective {:.6}", report.iters, report.objective);
    Ok(report)
}

fn add_into<T: Scalar>(acc: &mut [T], xs: &[T]) {
    for (a, &x) in acc.iter_mut().zip(xs) {
        *a += x;
    }
}

/// Configured weak-convexity bound used when no closed-form estimate
/// exists for the architecture.
pub(crate) fn rho_for_arch<T: Scalar>(
    arch: Arch,
    data: &LabeledDataset<T>,
    loss: &PairwiseLoss<T>,
    alpha: T,
    beta: T,
    configured: Option<T>,
) -> Option<T> {
    match (arch, configured) {
        (_, Some(r)) => Some(r),
        (Arch::LinearRaw, None) => Some(rho_estimate_linear(data, loss, alpha, beta)),
        _ => None,
    }
}

/// 1/prox_gamma must dominate the weak-convexity modulus; a relative slack
/// absorbs the rounding of `prox_gamma = 1/rho`.
pub(crate) fn check_prox_gamma<T: Scalar>(prox_gamma: T, rho: T) -> Result<()> {
    let inv = T::one() / prox_gamma;
    let slack = T::from(1e-12).unwrap() * rho.abs();
    if inv + slack < rho {
        return Err(PaucError::invalid(
            "prox_gamma",
            format!("1/prox_gamma = {inv} is below the weak-convexity estimate {rho}"),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::fixtures::{full_batch, scalar_data};

    #[test]
    fn prox_closed_form_solves_first_order_condition() {
        let (xt, x0, g, eta, gamma) = (0.7f64, -0.3, 1.9, 0.05, 0.2);
        let x = prox_linear(xt, x0, g, eta, gamma);
        let foc = g + (x - xt) / eta + (x - x0) / gamma;
        assert!(foc.abs() < 1e-12);
    }

    #[test]
    fn pi_stationary_when_duals_equal_alpha() {
        let (model, data) = scalar_data(&[0.1, 0.4], &[0.0, 0.3, -0.2]);
        let ctx = StepContext::new(&model, &data);
        let h = StepHyper { alpha_tpr: 0.5, beta_fpr: 1.0, ..StepHyper::default() };
        let mut st = OptimizerState::for_sota(vec![1.0], 2);
        st.u = vec![0.5, 0.5];
        st.pi = 0.25;
        let anchor = SotaAnchor::from_state(&st);
        sota_step(&mut st, &anchor, [0.1; 4], &h, &ctx, &full_batch(&data)).unwrap();
        assert!((st.pi - 0.25).abs() < 1e-15);
    }

    #[test]
    fn unit_duals_reduce_to_masked_mean_gradient() {
        let (model, data) = scalar_data(&[0.1, 0.4, -0.5], &[0.0, 0.3, -0.2, 0.8]);
        let ctx = StepContext::new(&model, &data);
        let h = StepHyper { alpha_tpr: 1.0, beta_fpr: 1.0, ..StepHyper::default() };
        let mut st = OptimizerState::for_sota(vec![1.0], 3);
        st.s = vec![0.5, 1.0, 0.2];
        let s = st.s.clone();
        let anchor = SotaAnchor::from_state(&st);
        let out = sota_step(&mut st, &anchor, [0.1; 4], &h, &ctx, &full_batch(&data)).unwrap();
        let (_, gw, _) = crate::losses::opauc_cvar_grad(&model, &data, &h.loss, 1.0, &s).unwrap();
        assert!((out.grad[0] - gw[0]).abs() < 1e-12);
    }

    #[test]
    fn duals_stay_in_unit_box() {
        let (model, data) = scalar_data(&[0.1, 0.4, -0.5, 2.0], &[0.0, 0.3, -0.2, 0.8]);
        let ctx = StepContext::new(&model, &data);
        let h = StepHyper { alpha_tpr: 0.5, beta_fpr: 0.5, eta4: 50.0, batch_pos: 2, batch_neg: 2, ..StepHyper::default() };
        let mut st = OptimizerState::for_sota(vec![1.0], 4);
        let mut sampler = BatchSampler::new(&data, 2, 2, 0).unwrap();
        let anchor = SotaAnchor::from_state(&st);
        for _ in 0..20 {
            for batch in sampler.next_epoch() {
                sota_step(&mut st, &anchor, [0.1, 0.1, 0.1, 50.0], &h, &ctx, &batch).unwrap();
                assert!(st.u.iter().all(|&u| (0.0..=1.0).contains(&u)));
            }
        }
    }

    #[test]
    fn schedule_validation() {
        let sch = SotaSchedule { stages: 3, base: 0.5, scale_by_n_pos: true };
        assert_eq!(sch.iters(1, 10), 5);
        assert_eq!(sch.iters(3, 10), 45);
        assert!(SotaSchedule { stages: 0, ..sch }.validate(10).is_err());
        assert!(SotaSchedule { base: 0.0, ..sch }.validate(10).is_err());
    }

    #[test]
    fn prox_parameter_checked_against_rho() {
        let (model, data) = scalar_data(&[0.1, 0.4], &[0.0, 0.3]);
        let ctx = StepContext::new(&model, &data);
        let h = StepHyper { alpha_tpr: 0.5, beta_fpr: 0.5, prox_gamma: 1.0, batch_pos: 1, batch_neg: 1, ..StepHyper::default() };
        let mut st = OptimizerState::for_sota(vec![1.0], 2);
        let mut sampler = BatchSampler::new(&data, 1, 1, 0).unwrap();
        let sch = SotaSchedule { stages: 1, base: 1.0, scale_by_n_pos: false };
        let err = sota_run(&mut st, &h, &ctx, &sch, &mut sampler, Some(5.0)).unwrap_err();
        assert!(matches!(err, PaucError::InvalidParameter { .. }));
    }
}

