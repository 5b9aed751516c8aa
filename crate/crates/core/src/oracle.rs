//! Brute-force references used to verify the fast paths.
//!
//! Nothing here calls into `metrics` or `losses`: windows, sorts and sums are
//! recomputed from scratch so that a bug in the production code cannot be
//! mirrored by its check.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{PaucError, Result};
use crate::metrics::{Normalization, ScoreSet};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PaucMode {
    /// FPR in `[alpha0, alpha1]`.
    OneWay { alpha0: f64, alpha1: f64 },
    /// TPR >= `alpha`, FPR <= `beta`.
    TwoWay { alpha: f64, beta: f64 },
}

/// Insertion sort of `(score, index)` keys by the given strict order.
fn insertion_sorted<T: Scalar>(xs: &[T], before: impl Fn((T, usize), (T, usize)) -> bool) -> Vec<usize> {
    let mut out: Vec<(T, usize)> = Vec::with_capacity(xs.len());
    for (i, &x) in xs.iter().enumerate() {
        let mut k = out.len();
        out.push((x, i));
        while k > 0 && before(out[k], out[k - 1]) {
            out.swap(k, k - 1);
            k -= 1;
        }
    }
    out.into_iter().map(|(_, i)| i).collect()
}

/// Exact partial AUC by explicit sorting and pair enumeration.
pub fn pauc_bruteforce<T: Scalar>(scores: &ScoreSet<T>, mode: PaucMode, normalization: Normalization) -> Result<f64> {
    let (np, nn) = (scores.pos.len(), scores.neg.len());
    if np == 0 || nn == 0 {
        return Err(PaucError::DegenerateClass("empty class"));
    }
    // descending by score, then ascending index
    let neg_desc = insertion_sorted(&scores.neg, |a, b| a.0 > b.0 || (a.0 == b.0 && a.1 < b.1));
    let (pos_sel, neg_sel, pairs): (Vec<usize>, Vec<usize>, usize) = match mode {
        PaucMode::OneWay { alpha0, alpha1 } => {
            if !(alpha0 >= 0.0 && alpha0 < alpha1 && alpha1 <= 1.0) {
                return Err(PaucError::invalid("alpha", "need 0 <= alpha0 < alpha1 <= 1"));
            }
            let lo = nn as f64 * alpha0;
            let hi = nn as f64 * alpha1;
            let k1 = (lo - 1e-9 * lo.max(1.0)).ceil().max(0.0) as usize;
            let k2 = ((hi + 1e-9 * hi.max(1.0)).floor() as usize).min(nn);
            if k1 >= k2 {
                return Err(PaucError::EmptyFprWindow { k1, k2 });
            }
            ((0..np).collect(), neg_desc[k1..k2].to_vec(), np * (k2 - k1))
        }
        PaucMode::TwoWay { alpha, beta } => {
            let a = np as f64 * alpha;
            let b = nn as f64 * beta;
            let k1 = ((a + 1e-9 * a.max(1.0)).floor() as usize).min(np);
            let k2 = ((b + 1e-9 * b.max(1.0)).floor() as usize).min(nn);
            if k1 == 0 || k2 == 0 {
                return Err(PaucError::EmptySelectionWindow { k1, k2 });
            }
            let pos_asc = insertion_sorted(&scores.pos, |a, b| a.0 < b.0 || (a.0 == b.0 && a.1 < b.1));
            (pos_asc[..k1].to_vec(), neg_desc[..k2].to_vec(), k1 * k2)
        }
    };
    let mut count: u64 = 0;
    for &i in &pos_sel {
        for &j in &neg_sel {
            if scores.pos[i] > scores.neg[j] {
                count += 1;
            }
        }
    }
    let denom = match normalization {
        Normalization::Unnormalized => np * nn,
        Normalization::Normalized => pairs,
    };
    Ok(count as f64 / denom as f64)
}

/// Minimizes `s + (1/(nγ)) Σ (ℓ_i - s)_+` over the candidates `s ∈ {ℓ_i}`.
/// Returns the minimum and the largest candidate attaining it (up to a
/// relative 1e-12), which is the `nγ`-th largest loss.
pub fn cvar_scan_min<T: Scalar>(losses: &[T], gamma: T) -> Result<(T, T)> {
    let n = losses.len();
    let k = n as f64 * gamma.to_f64_lossy();
    if n == 0 || (k - k.round()).abs() > 1e-9 * k.max(1.0) || k.round() < 1.0 {
        return Err(PaucError::CvarLevelNotIntegral { n, level: gamma.to_f64_lossy() });
    }
    let k = T::lit(k.round());
    let values: Vec<(T, T)> = losses
        .iter()
        .map(|&s| {
            let mut hinge = T::zero();
            for &l in losses {
                if l > s {
                    hinge += l - s;
                }
            }
            (s + hinge / k, s)
        })
        .collect();
    let min = values.iter().map(|p| p.0).fold(T::infinity(), T::min);
    let tol = T::lit(1e-12) * min.abs().max(T::one());
    let arg = values
        .iter()
        .filter(|p| p.0 - min <= tol)
        .map(|p| p.1)
        .fold(T::neg_infinity(), T::max);
    Ok((min, arg))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FdNorm {
    /// Largest coordinate-wise `|a-b| / max(|a|, |b|, floor)`.
    #[default]
    MaxRel,
    /// `||a-b|| / max(||a||, ||b||, floor)`.
    L2Rel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdConfig {
    pub step: f64,
    pub norm: FdNorm,
    /// A coordinate is skipped when `|f(x+h) - 2f(x) + f(x-h)| > kink_guard * h`,
    /// i.e. when the perturbation straddles a kink.
    pub kink_guard: f64,
}

impl Default for FdConfig {
    fn default() -> Self {
        Self { step: 1e-5, norm: FdNorm::MaxRel, kink_guard: 1e-3 }
    }
}

/// Denominator floor for relative errors.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct FdResult<T> {
    pub grad: Vec<T>,
    /// Coordinates whose central difference straddled a kink; their entry in
    /// `grad` is NaN.
    pub skipped: Vec<usize>,
}

impl<T: Scalar> FdResult<T> {
    /// Relative error against `analytic`, ignoring skipped coordinates.
    pub fn error_vs(&self, analytic: &[T], norm: FdNorm) -> f64 {
        let keep: Vec<usize> = (0..self.grad.len()).filter(|k| !self.skipped.contains(k)).collect();
        let a: Vec<f64> = keep.iter().map(|&k| analytic[k].to_f64_lossy()).collect();
        let b: Vec<f64> = keep.iter().map(|&k| self.grad[k].to_f64_lossy()).collect();
        relative_error(&a, &b, norm)
    }
}

pub fn relative_error(a: &[f64], b: &[f64], norm: FdNorm) -> f64 {
    assert_eq!(a.len(), b.len(), "relative_error length mismatch");
    match norm {
        FdNorm::MaxRel => a
            .iter()
            .zip(b)
            .map(|(&x, &y)| (x - y).abs() / x.abs().max(y.abs()).max(REL_FLOOR))
            .fold(0.0, f64::max),
        FdNorm::L2Rel => {
            let diff = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            diff / na.max(nb).max(REL_FLOOR)
        }
    }
}

/// Central finite differences, one coordinate at a time.
pub fn finite_diff_grad<T: Scalar>(f: impl Fn(&[T]) -> T, point: &[T], cfg: &FdConfig) -> Result<FdResult<T>> {
    if !(cfg.step > 0.0) {
        return Err(PaucError::invalid("step", "must be positive"));
    }
    let h = T::lit(cfg.step);
    let f0 = f(point);
    if !f0.is_finite() {
        return Err(PaucError::NonFinite("objective at base point".into()));
    }
    let mut x = point.to_vec();
    let mut grad = Vec::with_capacity(point.len());
    let mut skipped = Vec::new();
    for k in 0..point.len() {
        let orig = x[k];
        x[k] = orig + h;
        let fp = f(&x);
        x[k] = orig - h;
        let fm = f(&x);
        x[k] = orig;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(PaucError::NonFinite(format!("objective near coordinate {k}")));
        }
        let second = (fp - f0 - f0 + fm).abs();
        if second > T::lit(cfg.kink_guard) * h {
            skipped.push(k);
            grad.push(T::nan());
        } else {
            grad.push((fp - fm) / (h + h));
        }
    }
    Ok(FdResult { grad, skipped })
}

/// Worst midpoint-convexity violation of `G(z) = F(z) + (ρ̂/2)||z||²` over
/// `trials` random pairs drawn uniformly from the cube of half-width
/// `radius` around `reference`. Non-positive values mean no violation.
pub fn weak_convexity_probe<T: Scalar>(
    f: impl Fn(&[T]) -> T,
    reference: &[T],
    rho_hat: T,
    trials: usize,
    radius: T,
    seed: u64,
) -> T {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = T::lit(0.5);
    let g = |z: &[T]| f(z) + half * rho_hat * z.iter().fold(T::zero(), |acc, &v| acc + v * v);
    let mut worst = T::neg_infinity();
    for _ in 0..trials {
        let mut draw = || -> Vec<T> {
            reference
                .iter()
                .map(|&c| c + radius * T::lit(rng.random_range(-1.0..=1.0)))
                .collect()
        };
        let z1 = draw();
        let z2 = draw();
        let mid: Vec<T> = z1.iter().zip(&z2).map(|(&a, &b)| half * (a + b)).collect();
        let violation = g(&mid) - half * (g(&z1) + g(&z2));
        worst = worst.max(violation);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bruteforce_examples() {
        let s = ScoreSet::new(vec![0.9, 0.4], vec![0.8, 0.3, 0.1]).unwrap();
        let v = pauc_bruteforce(&s, PaucMode::OneWay { alpha0: 0.0, alpha1: 1.0 / 3.0 }, Normalization::Unnormalized)
            .unwrap();
        assert_eq!(v, 1.0 / 6.0);
        let rev = ScoreSet::new(vec![0.1, 0.2], vec![0.5, 0.9, 0.7]).unwrap();
        for mode in [
            PaucMode::OneWay { alpha0: 0.0, alpha1: 1.0 },
            PaucMode::TwoWay { alpha: 1.0, beta: 1.0 },
        ] {
            assert_eq!(pauc_bruteforce(&rev, mode, Normalization::Normalized).unwrap(), 0.0);
        }
    }

    #[test]
    fn scan_examples() {
        assert_eq!(cvar_scan_min(&[3.0, 1.0, 2.0], 1.0 / 3.0).unwrap(), (3.0, 3.0));
        let (v, s) = cvar_scan_min(&[3.0, 1.0, 2.0], 1.0).unwrap();
        assert!((v - 2.0_f64).abs() < 1e-15);
        assert_eq!(s, 1.0);
        assert_eq!(cvar_scan_min(&[0.7; 4], 0.5).unwrap(), (0.7, 0.7));
    }

    #[test]
    fn fd_examples() {
        let cfg = FdConfig::default();
        let r = finite_diff_grad(|w: &[f64]| w[0] * w[0] + w[1] * w[1], &[1.0, 2.0], &cfg).unwrap();
        assert!((r.grad[0] - 2.0).abs() < 1e-8 && (r.grad[1] - 4.0).abs() < 1e-8);
        let r = finite_diff_grad(|_: &[f64]| 3.0, &[1.0, -2.0, 0.5], &cfg).unwrap();
        assert!(r.grad.iter().all(|&g| g == 0.0));
        let r = finite_diff_grad(|w: &[f64]| w[0].abs() + w[1], &[0.0, 1.0], &cfg).unwrap();
        assert_eq!(r.skipped, vec![0]);
        assert!(finite_diff_grad(|_: &[f64]| f64::NAN, &[0.0], &cfg).is_err());
    }

    #[test]
    fn fd_error_is_second_order() {
        let f = |w: &[f64]| w[0].powi(3);
        let err = |h: f64| {
            let cfg = FdConfig { step: h, kink_guard: 1e9, ..Default::default() };
            (finite_diff_grad(f, &[1.0], &cfg).unwrap().grad[0] - 3.0).abs()
        };
        // central differences on x^3 have error exactly h^2
        let (e1, e2) = (err(1e-2), err(5e-3));
        assert!((e1 / e2 - 4.0).abs() < 1e-3, "ratio {}", e1 / e2);
    }

    #[test]
    fn probe_examples() {
        let convex = |z: &[f64]| z.iter().map(|v| v * v).sum::<f64>();
        assert!(weak_convexity_probe(convex, &[0.3, -0.2], 0.0, 200, 1.0, 1) <= 1e-12);
        let concave = |z: &[f64]| -z.iter().map(|v| v * v).sum::<f64>();
        assert!(weak_convexity_probe(concave, &[0.3, -0.2], 2.0, 200, 1.0, 1) <= 1e-12);
        assert!(weak_convexity_probe(concave, &[0.3, -0.2], 1.0, 200, 1.0, 1) > 1e-3);
    }
}
