use crate::scalar::{norm2, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct MoreauEstimate<T> {
    /// `ρ̂ ‖x − prox(x)‖`, the Moreau-envelope gradient norm.
    pub value: T,
    pub prox_point: Vec<T>,
    /// False when the inner solve diverged, produced non-finite values or
    /// was given no iterations.
    pub ok: bool,
}

/// Approximates the gradient norm of the Moreau envelope `F_{1/ρ̂}` at
/// `point` by running `inner_iters` gradient steps of size `step` on
/// `z ↦ F(z) + (ρ̂/2)‖z − point‖²`, started at `point`.
///
/// `objective` returns `(F(z), ∇F(z))`. Diagnostic only.
pub fn moreau_stationarity_estimate<T: Scalar>(
    objective: impl Fn(&[T]) -> (T, Vec<T>),
    point: &[T],
    rho_hat: T,
    inner_iters: usize,
    step: T,
) -> MoreauEstimate<T> {
    if inner_iters == 0 {
        return MoreauEstimate { value: T::zero(), prox_point: point.to_vec(), ok: false };
    }
    let half = T::lit(0.5);
    let sub = |z: &[T], f: T| {
        let d: Vec<T> = z.iter().zip(point).map(|(&a, &b)| a - b).collect();
        f + half * rho_hat * norm2(&d).powi(2)
    };
    let (f0, _) = objective(point);
    let start = sub(point, f0);
    let mut z = point.to_vec();
    for _ in 0..inner_iters {
        let (_, g) = objective(&z);
        for ((zk, &gk), &xk) in z.iter_mut().zip(&g).zip(point) {
            *zk -= step * (gk + rho_hat * (*zk - xk));
        }
    }
    let (f_end, _) = objective(&z);
    let end = sub(&z, f_end);
    let d: Vec<T> = z.iter().zip(point).map(|(&a, &b)| a - b).collect();
    let value = rho_hat * norm2(&d);
    let ok = value.is_finite() && end.is_finite() && end <= start;
    MoreauEstimate { value, prox_point: z, ok }
}
