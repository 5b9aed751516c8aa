//! Floating-point scalar abstraction shared by every numeric routine.
//!
//! All math in this crate is written against [`Scalar`], which is
//! implemented for `f32` and `f64`. Oracle tolerances quoted in the tests
//! assume `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// floating point: f32 or f64
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Neumaier-compensated accumulator.
///
/// Reordering the summands changes the result by far less than naive
/// summation does, which keeps full-batch objectives stable when pair
/// loops are visited in a different order.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum<T> {
    sum: T,
    comp: T,
}

impl<T: Scalar> CompensatedSum<T> {
    pub fn new() -> Self {
        Self {
            sum: T::zero(),
            comp: T::zero(),
        }
    }

    #[inline]
    pub fn add(&mut self, x: T) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> T {
        self.sum + self.comp
    }
}

impl<T: Scalar> FromIterator<T> for CompensatedSum<T> {
    fn from_iter<I: IntoIterator<Item = T>>(iter: I) -> Self {
        let mut acc = Self::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Compensated sum of an iterator.
pub fn csum<T: Scalar, I: IntoIterator<Item = T>>(iter: I) -> T {
    iter.into_iter().collect::<CompensatedSum<T>>().value()
}

/// Compensated arithmetic mean; zero for an empty slice.
pub fn cmean<T: Scalar>(xs: &[T]) -> T {
    if xs.is_empty() {
        return T::zero();
    }
    csum(xs.iter().copied()) / T::from_count(xs.len())
}

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// `log(1 + exp(z))` without overflow.
#[inline]
pub fn softplus<T: Scalar>(z: T) -> T {
    if z > T::zero() {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// `log(mean(exp(xs)))` with max subtraction. Returns `-inf` for an empty slice.
pub fn log_mean_exp<T: Scalar>(xs: &[T]) -> T {
    if xs.is_empty() {
        return T::neg_infinity();
    }
    let m = xs.iter().copied().fold(T::neg_infinity(), T::max);
    if !m.is_finite() {
        return m;
    }
    let s = csum(xs.iter().map(|&x| (x - m).exp()));
    m + (s / T::from_count(xs.len())).ln()
}

/// Dot product with compensated accumulation.
#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    csum(a.iter().zip(b).map(|(&x, &y)| x * y))
}

pub fn norm2<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let xs = [1.0e16_f64, 1.0, -1.0e16, 1.0];
        assert_eq!(csum(xs.iter().copied()), 2.0);
    }

    #[test]
    fn reordering_is_stable() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 1013) as f64 * 1e-3 + 1e6).collect();
        let mut rev = xs.clone();
        rev.reverse();
        let a = csum(xs.iter().copied());
        let b = csum(rev.iter().copied());
        assert!((a - b).abs() <= 1e-12 * a.abs());
    }

    #[test]
    fn sigmoid_and_softplus_extremes() {
        assert_eq!(sigmoid(0.0_f64), 0.5);
        assert!(sigmoid(-800.0_f64) >= 0.0);
        assert_eq!(sigmoid(800.0_f64), 1.0);
        assert!((softplus(800.0_f64) - 800.0).abs() < 1e-12);
        assert!((softplus(0.0_f64) - 2.0_f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn log_mean_exp_large_inputs() {
        let v = log_mean_exp(&[1000.0_f64, 1000.0]);
        assert_eq!(v, 1000.0);
        let w = log_mean_exp(&[80.0_f32, 90.0]);
        assert!(w.is_finite());
    }
}
