use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Average-regret rate `rho(t) = min{c1 * t^(p-1) + c2 / t, c3}` and its
/// cumulative form `C(t) = t * rho(t) = min{c1 * t^p + c2, c3 * t}`.
///
/// Construction checks that `rho` is non-increasing, `C` non-decreasing and
/// `rho(t) >= 1 / sqrt(t)` for every `t` up to the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFunction<F> {
    c1: F,
    c2: F,
    c3: F,
    p: F,
}

impl<F: Scalar> RateFunction<F> {
    pub fn new(c1: F, c2: F, c3: F, p: F, horizon: usize) -> Result<Self> {
        if !(c1 >= F::zero()) || !c1.is_finite() {
            return Err(Error::config("rate.c1", format!("{c1} must be finite and >= 0")));
        }
        if !(c2 >= F::zero()) || !c2.is_finite() {
            return Err(Error::config("rate.c2", format!("{c2} must be finite and >= 0")));
        }
        if !(c3 >= F::one()) {
            return Err(Error::config("rate.c3", format!("{c3} must be >= 1")));
        }
        if !(p >= F::lit(0.5) && p < F::one()) {
            return Err(Error::config("rate.p", format!("{p} must lie in [1/2, 1)")));
        }
        let rate = Self { c1, c2, c3, p };
        rate.validate(horizon)?;
        Ok(rate)
    }

    /// `rho(t) = c1 / sqrt(t)`, the textbook square-root rate.
    pub fn inverse_sqrt(c1: F, horizon: usize) -> Result<Self> {
        Self::new(c1, F::zero(), F::infinity(), F::lit(0.5), horizon)
    }

    fn validate(&self, horizon: usize) -> Result<()> {
        // relative slack absorbs rounding in the power evaluations
        let slack = F::one() - F::lit(1e-6);
        let mut prev_rho = F::infinity();
        let mut prev_cap = F::zero();
        for t in 1..=horizon.max(1) {
            let rho = self.rho(t);
            let cap = self.capacity(t);
            let floor = F::one() / F::from_count(t).sqrt();
            if rho < floor * slack {
                return Err(Error::config(
                    "rate",
                    format!("rho({t}) = {rho} falls below 1/sqrt(t) = {floor}"),
                ));
            }
            if rho > prev_rho / slack || cap < prev_cap * slack {
                return Err(Error::config("rate", format!("monotonicity violated at t = {t}")));
            }
            prev_rho = rho;
            prev_cap = cap;
        }
        Ok(())
    }

    pub fn rho(&self, t: usize) -> F {
        let t = F::from_count(t);
        (self.c1 * t.powf(self.p - F::one()) + self.c2 / t).min(self.c3)
    }

    pub fn capacity(&self, t: usize) -> F {
        F::from_count(t) * self.rho(t)
    }

    pub fn c1(&self) -> F {
        self.c1
    }

    pub fn c2(&self) -> F {
        self.c2
    }

    pub fn c3(&self) -> F {
        self.c3
    }

    pub fn exponent(&self) -> F {
        self.p
    }
}
