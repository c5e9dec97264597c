//! Scalar abstraction for the numeric kernels.
//!
//! Rate functions, stationarity thresholds, extended value iteration and
//! hitting-time computation are written against [`Scalar`] so they can be
//! instantiated at `f32` or `f64`. The simulator itself runs at `f64`.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub trait Scalar: Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static {
    /// Converts an `f64` literal. Panics only if the target type cannot
    /// represent finite `f64` values at all, which never happens for floats.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("float literal")
    }

    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count fits in float")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Index of the largest element; ties resolve to the lowest index.
pub fn argmax<F: Scalar>(values: &[F]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub fn span<F: Scalar>(values: &[F]) -> F {
    let (lo, hi) = min_max(values);
    hi - lo
}

pub fn min_max<F: Scalar>(values: &[F]) -> (F, F) {
    values.iter().fold((F::infinity(), F::neg_infinity()), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    })
}
