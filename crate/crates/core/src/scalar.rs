//! Scalar abstraction shared by every numeric kernel in the crate.
//!
//! All math is written against [`Scalar`], which is implemented for `f32` and
//! `f64`. The orchestration layer (`harness`) fixes `f64`.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::str::FromStr;

use ndarray::ScalarOperand;
use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point type usable throughout the engine.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + ScalarOperand
    + Debug
    + Display
    + LowerExp
    + Default
    + FromStr
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal or computed value into `Self`.
    fn of(v: f64) -> Self;

    /// Widens (or passes through) to `f64`.
    fn as_f64(self) -> f64;

    /// Converts a count or index.
    fn of_usize(n: usize) -> Self {
        Self::of(n as f64)
    }

    /// Largest representable value strictly below one.
    fn below_one() -> Self;
}

impl Scalar for f64 {
    #[inline]
    fn of(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
    fn below_one() -> Self {
        1.0 - f64::EPSILON / 2.0
    }
}

impl Scalar for f32 {
    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
    fn below_one() -> Self {
        1.0 - f32::EPSILON / 2.0
    }
}

/// Numerically stable logistic function.
pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// Sum in a fixed left-to-right order.
pub fn mean<T: Scalar>(values: &[T]) -> T {
    if values.is_empty() {
        return T::zero();
    }
    values.iter().copied().sum::<T>() / T::of_usize(values.len())
}

/// Percentile with linear interpolation between closest ranks.
pub fn percentile<T: Scalar>(values: &[T], q: f64) -> T {
    assert!(!values.is_empty(), "percentile of an empty slice");
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("NaN in percentile input"));
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = T::of(pos - lo as f64);
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_matches_closed_form() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert!((sigmoid(3f64.ln()) - 0.75).abs() < 1e-15);
        assert!(sigmoid(-800.0f64) >= 0.0);
        assert!(sigmoid(800.0f64) <= 1.0);
    }

    #[test]
    fn percentile_interpolates() {
        let v = [1.0f64, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile(&v, 0.5), 3.0);
        assert!((percentile(&v, 0.95) - 4.8).abs() < 1e-12);
        assert_eq!(percentile(&[7.0f64], 0.95), 7.0);
    }

    #[test]
    fn below_one_is_below_one() {
        assert!(f32::below_one() < 1.0);
        assert!(f64::below_one() < 1.0);
    }
}
