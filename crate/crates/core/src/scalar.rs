//! Floating-point scalar abstraction.
//!
//! Every numeric routine in the crate is written against [`Scalar`], which is
//! implemented for `f32` and `f64`. The crate root exports `f64` aliases for
//! the common types.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssign};

/// Real scalar usable by the models: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + NumAssign
    + LinalgScalar
    + ScalarOperand
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant, rounding to the nearest representable value.
    fn cast(x: f64) -> Self;

    /// Widens to `f64` exactly.
    fn widen(self) -> f64;

    /// Narrows an `f64` carried through serialization back to `Self`.
    fn narrow(x: f64) -> Self {
        Self::cast(x)
    }
}

impl Scalar for f32 {
    #[inline]
    fn cast(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn widen(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn cast(x: f64) -> Self {
        x
    }
    #[inline]
    fn widen(self) -> f64 {
        self
    }
}

/// Logistic sigmoid `1 / (1 + e^-x)`.
///
/// Only `exp` of a non-positive argument is ever taken, so the result stays
/// finite and inside `[0, 1]` for any finite input.
#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `log(1 + e^x)` without overflow.
#[inline]
pub fn softplus<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `log(p / (1 - p))`.
#[inline]
pub fn logit<T: Scalar>(p: T) -> T {
    (p / (T::one() - p)).ln()
}

/// Numerically stable `log Σ exp(x_i)`; returns `-inf` for an empty input.
pub fn log_sum_exp<T: Scalar>(values: impl IntoIterator<Item = T> + Clone) -> T {
    let max = values
        .clone()
        .into_iter()
        .fold(T::neg_infinity(), |m, x| if x > m { x } else { m });
    if max == T::neg_infinity() {
        return max;
    }
    let sum: T = values.into_iter().map(|x| (x - max).exp()).sum();
    max + sum.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(-750.0f64), 0.0);
        assert_eq!(sigmoid(750.0f64), 1.0);
        assert!(sigmoid(-1000.0f32) >= 0.0);
        assert!((sigmoid(0.0f64) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_symmetry_and_range() {
        for i in -400..=400 {
            let x = i as f64 * 0.05;
            let s = sigmoid(x);
            assert!(s > 0.0 && s < 1.0);
            assert!((sigmoid(-x) - (1.0 - s)).abs() < 1e-12);
        }
    }

    #[test]
    fn softplus_matches_naive_in_safe_range() {
        for i in -20..=20 {
            let x = i as f64 * 0.5;
            assert!((softplus(x) - (1.0 + x.exp()).ln()).abs() < 1e-12);
        }
        assert!((softplus(800.0f64) - 800.0).abs() < 1e-12);
    }

    #[test]
    fn log_sum_exp_handles_large_terms() {
        let v = [1000.0f64, 1000.0];
        assert!((log_sum_exp(v.iter().copied()) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp(std::iter::empty::<f64>()), f64::NEG_INFINITY);
    }

    #[test]
    fn logit_inverts_sigmoid() {
        assert_eq!(logit(0.5f64), 0.0);
        assert!((logit(sigmoid(2.5f64)) - 2.5).abs() < 1e-12);
    }
}
