use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// EXP3.P for a known number of rounds and rewards rescaled to `[0, 1]`,
/// kept in log-weights.
///
/// With `K` arms over `n` rounds and confidence `delta`:
/// `alpha = 2 sqrt(ln(K n / delta))`, `gamma = min{3/5, 2 sqrt(3/5 K ln K / n)}`,
/// `p_i = (1 - gamma) w_i / sum w + gamma / K` and, after playing `j` with
/// reward `x`, `ln w_i += gamma / (3K) (xhat_i + alpha / (p_i sqrt(K n)))`
/// where `xhat_j = x / p_j` and zero elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp3P {
    log_weights: Vec<f64>,
    gamma: f64,
    alpha: f64,
    rounds: usize,
    plays: usize,
}

impl Exp3P {
    pub fn new(arms: usize, rounds: usize, delta: f64) -> Result<Self> {
        if arms == 0 {
            return Err(Error::config("exp3p.arms", "need at least one arm"));
        }
        if rounds == 0 {
            return Err(Error::config("exp3p.rounds", "need at least one round"));
        }
        let (k, n) = (arms as f64, rounds as f64);
        let gamma = (2.0 * (0.6 * k * k.ln() / n).sqrt()).min(0.6);
        let alpha = 2.0 * (k * n / delta).ln().max(0.0).sqrt();
        Ok(Self {
            log_weights: vec![0.0; arms],
            gamma,
            alpha,
            rounds,
            plays: 0,
        })
    }

    pub fn arms(&self) -> usize {
        self.log_weights.len()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let k = self.arms() as f64;
        let top = self.log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = self.log_weights.iter().map(|&l| (l - top).exp()).collect();
        let total: f64 = w.iter().sum();
        w.iter()
            .map(|&x| (1.0 - self.gamma) * x / total + self.gamma / k)
            .collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let p = self.probabilities();
        if p.len() == 1 {
            return 0;
        }
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, &pi) in p.iter().enumerate() {
            acc += pi;
            if u < acc {
                return i;
            }
        }
        p.len() - 1
    }

    /// Feeds back the reward `x in [0, 1]` of the arm played this round.
    pub fn update(&mut self, arm: usize, reward: f64) -> Result<()> {
        if arm >= self.arms() {
            return Err(Error::FeedbackMismatch(format!("arm {arm} out of range")));
        }
        let p = self.probabilities();
        let k = self.arms() as f64;
        let root = (k * self.rounds as f64).sqrt();
        let scale = self.gamma / (3.0 * k);
        for (i, lw) in self.log_weights.iter_mut().enumerate() {
            let xhat = if i == arm { reward.clamp(0.0, 1.0) / p[i] } else { 0.0 };
            *lw += scale * (xhat + self.alpha / (p[i] * root));
        }
        self.plays += 1;
        Ok(())
    }

    pub fn plays(&self) -> usize {
        self.plays
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn starts_uniform() {
        let e = Exp3P::new(4, 100, 0.01).unwrap();
        for p in e.probabilities() {
            assert!((p - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn single_arm_is_certain() {
        let mut e = Exp3P::new(1, 100, 0.01).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(e.probabilities(), vec![1.0]);
        assert_eq!(e.sample(&mut rng), 0);
        e.update(0, 0.3).unwrap();
        assert_eq!(e.probabilities(), vec![1.0]);
    }

    #[test]
    fn floor_and_normalisation_hold() {
        let mut e = Exp3P::new(3, 500, 0.01).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for t in 0..500 {
            let arm = e.sample(&mut rng);
            let reward = if arm == t % 3 { 1.0 } else { 0.0 };
            e.update(arm, reward).unwrap();
            let p = e.probabilities();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|&x| x >= e.gamma() / 3.0 - 1e-15));
        }
    }

    #[test]
    fn concentrates_on_the_good_arm() {
        let mut e = Exp3P::new(2, 5000, 0.01).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5000 {
            let arm = e.sample(&mut rng);
            e.update(arm, if arm == 1 { 0.8 } else { 0.2 }).unwrap();
        }
        assert!(e.probabilities()[1] > 0.8);
    }
}
