use serde::{Deserialize, Serialize};

use super::{argmax_f64, BaseAlgorithm, Confidence, PolicyIndex, Prediction, RateFunction, Snapshot, StepSignal};
use crate::error::{Error, Result};

/// UCB1 with a horizon-wide confidence radius `c * sqrt(log(T/delta) / N+)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ucb1 {
    counts: Vec<u64>,
    sums: Vec<f64>,
    bonus_scale: f64,
    log_term: f64,
    steps: u64,
}

impl Ucb1 {
    pub const DEFAULT_BONUS: f64 = 2.0;

    pub fn new(arms: usize, bonus_scale: f64, conf: Confidence) -> Result<Self> {
        if arms == 0 {
            return Err(Error::config("ucb1.arms", "need at least one arm"));
        }
        if !(bonus_scale > 0.0) {
            return Err(Error::config("ucb1.c", "bonus constant must be positive"));
        }
        Ok(Self {
            counts: vec![0; arms],
            sums: vec![0.0; arms],
            bonus_scale,
            log_term: conf.log_term(),
            steps: 0,
        })
    }

    /// `rho(t) = sqrt(A log(T/delta) / t) + A log(T/delta) / t`, capped at 1.
    pub fn rate(arms: usize, conf: Confidence) -> Result<RateFunction<f64>> {
        let al = arms as f64 * conf.log_term();
        RateFunction::new(al.sqrt(), al, 1.0, 0.5, conf.horizon)
    }

    pub fn arms(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn mean(&self, arm: usize) -> f64 {
        self.sums[arm] / self.counts[arm].max(1) as f64
    }

    pub fn bonus(&self, arm: usize) -> f64 {
        self.bonus_scale * (self.log_term / self.counts[arm].max(1) as f64).sqrt()
    }

    pub fn index(&self, arm: usize) -> f64 {
        self.mean(arm) + self.bonus(arm)
    }

    fn best(&self) -> (usize, f64) {
        argmax_f64((0..self.arms()).map(|a| self.index(a)))
    }
}

impl BaseAlgorithm for Ucb1 {
    type Obs = ();
    type Action = PolicyIndex;
    type Feedback = f64;

    fn predict(&self) -> Prediction {
        Prediction::clamped(self.best().1)
    }

    fn act(&self, _: &()) -> PolicyIndex {
        PolicyIndex(self.best().0)
    }

    fn update(&mut self, _: &(), action: &PolicyIndex, reward: &f64) -> Result<StepSignal> {
        let arm = action.0;
        if arm >= self.arms() {
            return Err(Error::FeedbackMismatch(format!(
                "arm {arm} out of range for {} arms",
                self.arms()
            )));
        }
        self.counts[arm] += 1;
        self.sums[arm] += reward;
        self.steps += 1;
        Ok(StepSignal::Continue)
    }

    fn internal_time(&self) -> u64 {
        self.steps
    }
}

impl Snapshot for Ucb1 {
    const KIND: &'static str = "ucb1";
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conf() -> Confidence {
        Confidence::new(1024, 1.0 / 1024.0).unwrap()
    }

    /// Bonus constant that makes `c * sqrt(log / N)` equal `target` at `N = n`.
    fn scale_for(target: f64, n: f64) -> f64 {
        target / (conf().log_term() / n).sqrt()
    }

    fn with_stats(counts: &[u64], means: &[f64], c: f64) -> Ucb1 {
        let mut alg = Ucb1::new(counts.len(), c, conf()).unwrap();
        for (a, (&n, &m)) in counts.iter().zip(means).enumerate() {
            alg.counts[a] = n;
            alg.sums[a] = m * n as f64;
        }
        alg
    }

    #[test]
    fn fresh_instance_is_fully_optimistic() {
        let alg = Ucb1::new(3, 2.0, conf()).unwrap();
        assert_eq!(alg.counts(), &[0, 0, 0]);
        assert_eq!(alg.predict().value(), 1.0);
        assert_eq!(alg.act(&()), PolicyIndex(0));
    }

    #[test]
    fn predict_is_best_index() {
        let alg = with_stats(&[100, 100], &[0.3, 0.5], scale_for(0.1, 100.0));
        assert!((alg.predict().value() - 0.6).abs() < 1e-12);
        assert_eq!(alg.act(&()), PolicyIndex(1));
    }

    #[test]
    fn equal_bonuses_reduce_to_means() {
        let alg = with_stats(&[1, 1], &[0.5, 0.9], 0.01);
        assert_eq!(alg.act(&()), PolicyIndex(1));
    }

    #[test]
    fn bonus_can_override_mean() {
        // indices 0.6 + 0.1 and 0.5 + 1.0
        let c = scale_for(0.1, 100.0);
        let alg = with_stats(&[100, 1], &[0.6, 0.5], c);
        assert!((alg.bonus(1) - 1.0).abs() < 1e-12);
        assert_eq!(alg.act(&()), PolicyIndex(1));
    }

    #[test]
    fn update_tracks_counts_and_means() {
        let mut alg = Ucb1::new(2, 2.0, conf()).unwrap();
        alg.update(&(), &PolicyIndex(0), &0.7).unwrap();
        assert_eq!(alg.counts(), &[1, 0]);
        assert!((alg.mean(0) - 0.7).abs() < 1e-15);
        assert_eq!(alg.internal_time(), 1);
        assert!(alg.update(&(), &PolicyIndex(5), &0.1).is_err());
    }

    #[test]
    fn rate_matches_closed_form() {
        let rate = Ucb1::rate(2, conf()).unwrap();
        let al = 2.0 * conf().log_term();
        let t = 512.0;
        assert!((rate.rho(512) - ((al / t).sqrt() + al / t).min(1.0)).abs() < 1e-12);
        assert_eq!(rate.rho(1), 1.0);
    }
}
