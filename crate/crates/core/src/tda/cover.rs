use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Closed interval `[lo, hi]` of the lens range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Scalar> Interval<T> {
    pub fn contains(&self, v: T) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn len(&self) -> T {
        self.hi - self.lo
    }
}

/// `r` intervals with centers `min + s(i + 1/2)`, `s = range / r`, each of
/// length `s / (1 - g)`. A constant lens yields one degenerate interval.
pub fn build_cover<T: Scalar>(lens: &[T], resolution: usize, gain: f64) -> Result<Vec<Interval<T>>> {
    if lens.is_empty() {
        return Err(Error::Precondition("empty lens".into()));
    }
    if resolution == 0 {
        return Err(Error::Config("resolution must be positive".into()));
    }
    if !(0.0..1.0).contains(&gain) {
        return Err(Error::Config(format!("gain {gain} outside [0, 1)")));
    }
    if lens.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite lens value".into()));
    }
    let lo = lens.iter().copied().fold(T::infinity(), T::min);
    let hi = lens.iter().copied().fold(T::neg_infinity(), T::max);
    if hi == lo {
        return Ok(vec![Interval { lo, hi }]);
    }
    let s = (hi - lo) / T::of_usize(resolution);
    let half = s / T::of(2.0 * (1.0 - gain));
    Ok((0..resolution)
        .map(|i| {
            let c = lo + s * (T::of_usize(i) + T::of(0.5));
            let mut iv = Interval { lo: c - half, hi: c + half };
            // guard the outer ends against rounding
            if i == 0 {
                iv.lo = iv.lo.min(lo);
            }
            if i + 1 == resolution {
                iv.hi = iv.hi.max(hi);
            }
            iv
        })
        .collect())
}
