//! Scalar abstraction shared by the numeric modules.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Real floating-point scalar the physics kernels are generic over.
///
/// Implemented for `f32` and `f64`. The optimiser and the histogram fitter
/// are `f64`-only because their convergence tolerances sit below `f32`
/// resolution.
pub trait Real:
    Float + FloatConst + NumAssign + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Converts an `f64` literal. Never fails for the supported scalars.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    /// Relative tolerance appropriate for "exact" identities at this precision.
    fn exact_tolerance() -> Self;
}

impl Real for f32 {
    fn exact_tolerance() -> Self {
        1e-5
    }
}

impl Real for f64 {
    fn exact_tolerance() -> Self {
        1e-12
    }
}

/// Neumaier-compensated accumulator.
///
/// Two-excitation probabilities of order 1e-8 are summed next to terms of
/// order one, so plain summation loses most of their digits.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum<T> {
    sum: T,
    carry: T,
}

impl<T: Real> CompensatedSum<T> {
    pub fn new() -> Self {
        Self { sum: T::zero(), carry: T::zero() }
    }

    pub fn add(&mut self, x: T) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry = self.carry + ((self.sum - t) + x);
        } else {
            self.carry = self.carry + ((x - t) + self.sum);
        }
        self.sum = t;
    }

    pub fn value(&self) -> T {
        self.sum + self.carry
    }
}

impl<T: Real> FromIterator<T> for CompensatedSum<T> {
    fn from_iter<I: IntoIterator<Item = T>>(iter: I) -> Self {
        let mut acc = Self::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Compensated sum of an iterator.
pub fn compensated_sum<T: Real, I: IntoIterator<Item = T>>(iter: I) -> T {
    iter.into_iter().collect::<CompensatedSum<T>>().value()
}

/// `(1 - x)^n` evaluated through `ln_1p` so small `x` keeps full precision.
#[inline]
pub fn one_minus_pow<T: Real>(x: T, n: i32) -> T {
    if n == 0 {
        return T::one();
    }
    if x >= T::one() {
        return if n > 0 { T::zero() } else { T::infinity() };
    }
    (T::from_i32(n).unwrap() * (-x).ln_1p()).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_keeps_small_terms() {
        let xs = [1.0f64, 1e-17, -1.0, 1e-17];
        let naive: f64 = xs.iter().sum();
        assert_eq!(naive, 1e-17);
        assert!((compensated_sum(xs) - 2e-17).abs() < 1e-30);
    }

    #[test]
    fn one_minus_pow_matches_powi() {
        for &x in &[1e-9f64, 1e-4, 0.3, 0.9] {
            for n in [0, 1, 2, 7, 50] {
                let direct = (1.0 - x).powi(n);
                assert!((one_minus_pow(x, n) - direct).abs() <= 1e-14 * direct.max(1e-300));
            }
        }
        assert_eq!(one_minus_pow(1.0f64, 3), 0.0);
    }
}
