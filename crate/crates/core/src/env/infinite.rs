use rand::Rng;
use serde::{Deserialize, Serialize};

use super::bandit::bernoulli;
use crate::error::{Error, Result};
use crate::inf_mdp::{compute_diameter, optimal_gain, TabularMdp, Transition};

/// Largest `A^S` for which policy gains are compared by enumeration.
pub const MAX_ENUMERATED_POLICIES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfiniteSegment {
    pub start: usize,
    pub length: usize,
    pub mdp: TabularMdp<f64>,
    pub diameter: f64,
    pub gain: f64,
}

/// Piecewise-stationary communicating MDP over rounds `1..=T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfiniteMdpTrace {
    pub horizon: usize,
    pub initial_state: usize,
    pub segments: Vec<InfiniteSegment>,
}

impl InfiniteMdpTrace {
    pub fn new(pieces: Vec<(usize, TabularMdp<f64>)>, horizon: usize, initial_state: usize) -> Result<Self> {
        let first = &pieces
            .first()
            .ok_or_else(|| Error::config("env.segments", "need at least one segment"))?
            .1;
        let shape = (first.states, first.actions);
        if initial_state >= shape.0 {
            return Err(Error::config(
                "env.initial_state",
                format!("{initial_state} >= S = {}", shape.0),
            ));
        }
        let mut start = 1;
        let mut segments = Vec::with_capacity(pieces.len());
        for (i, (len, mdp)) in pieces.into_iter().enumerate() {
            if len == 0 {
                return Err(Error::config(format!("env.segments[{i}].length"), "must be positive"));
            }
            if (mdp.states, mdp.actions) != shape {
                return Err(Error::config(
                    format!("env.segments[{i}]"),
                    "S and A differ from the first segment",
                ));
            }
            let diameter = compute_diameter(&mdp).map_err(|e| match e {
                Error::NotCommunicating(m) => {
                    Error::config(format!("env.segments[{i}]"), format!("not communicating: {m}"))
                }
                other => other,
            })?;
            let gain = optimal_gain(&mdp)?;
            segments.push(InfiniteSegment {
                start,
                length: len,
                mdp,
                diameter,
                gain,
            });
            start += len;
        }
        if start - 1 != horizon {
            return Err(Error::config(
                "env.segments",
                format!("segment lengths sum to {}, expected T = {horizon}", start - 1),
            ));
        }
        Ok(Self {
            horizon,
            initial_state,
            segments,
        })
    }

    pub fn states(&self) -> usize {
        self.segments[0].mdp.states
    }

    pub fn actions(&self) -> usize {
        self.segments[0].mdp.actions
    }

    pub fn segment(&self, t: usize) -> Result<&InfiniteSegment> {
        if t == 0 || t > self.horizon {
            return Err(Error::RoundOutOfRange {
                t,
                horizon: self.horizon,
            });
        }
        let i = self.segments.partition_point(|s| s.start <= t) - 1;
        Ok(&self.segments[i])
    }

    /// Optimal gain `J*_t`.
    pub fn optimal_value(&self, t: usize) -> Result<f64> {
        Ok(self.segment(t)?.gain)
    }

    /// `D_max`, the largest diameter over segments.
    pub fn max_diameter(&self) -> f64 {
        self.segments.iter().map(|s| s.diameter).fold(0.0, f64::max)
    }

    /// One environment step from `state` with a Bernoulli reward.
    pub fn step<R: Rng + ?Sized>(&self, t: usize, state: usize, action: usize, rng: &mut R) -> Result<Transition> {
        let mdp = &self.segment(t)?.mdp;
        if action >= mdp.actions || state >= mdp.states {
            return Err(Error::FeedbackMismatch(format!("({state}, {action}) outside the MDP")));
        }
        let reward = bernoulli(mdp.reward(state, action), rng);
        let next_state = mdp.sample_next(state, action, rng);
        Ok(Transition {
            state,
            action,
            reward,
            next_state,
        })
    }

    /// `Delta^r(t) + 2 dbar Delta^p(t) + Delta^J(t)` between rounds `t` and `t + 1`.
    pub fn drift(&self, t: usize, dbar: f64) -> Result<f64> {
        if t >= self.horizon {
            return Ok(0.0);
        }
        let (a, b) = (self.segment(t)?, self.segment(t + 1)?);
        if a.start == b.start {
            return Ok(0.0);
        }
        let (dr, dp) = reward_and_transition_shift(&a.mdp, &b.mdp);
        let dj = policy_gain_shift(&a.mdp, &b.mdp, a.diameter.max(b.diameter));
        Ok(dr + 2.0 * dbar * dp + dj)
    }
}

/// `(max |r - r'|, max ||p - p'||_1)` over state-action pairs.
pub fn reward_and_transition_shift(a: &TabularMdp<f64>, b: &TabularMdp<f64>) -> (f64, f64) {
    let mut dr: f64 = 0.0;
    let mut dp: f64 = 0.0;
    for s in 0..a.states {
        for x in 0..a.actions {
            dr = dr.max((a.reward(s, x) - b.reward(s, x)).abs());
            dp = dp.max(a.row(s, x).iter().zip(b.row(s, x)).map(|(p, q)| (p - q).abs()).sum());
        }
    }
    (dr, dp)
}

/// `max_pi |J(pi) - J'(pi)|` over deterministic stationary policies, taking
/// the worst start state for multichain policies. Falls back to the bound
/// `Delta^r + D_max Delta^p` when there are too many policies to enumerate.
pub fn policy_gain_shift(a: &TabularMdp<f64>, b: &TabularMdp<f64>, d_max: f64) -> f64 {
    let count = (a.actions as f64).powi(a.states as i32);
    if count > MAX_ENUMERATED_POLICIES as f64 {
        let (dr, dp) = reward_and_transition_shift(a, b);
        return dr + d_max * dp;
    }
    let mut worst: f64 = 0.0;
    for code in 0..count as usize {
        let pol = decode_policy(code, a.states, a.actions);
        let (ga, gb) = (policy_gains(a, &pol), policy_gains(b, &pol));
        for (x, y) in ga.iter().zip(&gb) {
            worst = worst.max((x - y).abs());
        }
    }
    worst
}

pub fn decode_policy(mut code: usize, states: usize, actions: usize) -> Vec<usize> {
    (0..states)
        .map(|_| {
            let a = code % actions;
            code /= actions;
            a
        })
        .collect()
}

/// Per-start-state long-run average reward of a deterministic policy.
///
/// The lazy chain `(I + P) / 2` is aperiodic with the same Cesaro limit, so
/// repeated squaring converges to the limiting matrix.
pub fn policy_gains(mdp: &TabularMdp<f64>, policy: &[usize]) -> Vec<f64> {
    let n = mdp.states;
    let mut m = vec![0.0; n * n];
    for s in 0..n {
        for (x, &p) in mdp.row(s, policy[s]).iter().enumerate() {
            m[s * n + x] = 0.5 * p;
        }
        m[s * n + s] += 0.5;
    }
    let r: Vec<f64> = (0..n).map(|s| mdp.reward(s, policy[s])).collect();
    let apply = |m: &[f64]| -> Vec<f64> { (0..n).map(|s| (0..n).map(|x| m[s * n + x] * r[x]).sum()).collect() };
    let mut prev = apply(&m);
    for _ in 0..64 {
        let mut sq = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let v = m[i * n + k];
                if v == 0.0 {
                    continue;
                }
                for j in 0..n {
                    sq[i * n + j] += v * m[k * n + j];
                }
            }
        }
        m = sq;
        let cur = apply(&m);
        let change = cur.iter().zip(&prev).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prev = cur;
        if change < 1e-14 {
            break;
        }
    }
    prev
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn swap_gain_per_policy() {
        let mdp: TabularMdp<f64> = TabularMdp::swap();
        let g = policy_gains(&mdp, &[0, 0]);
        assert!((g[0] - 0.5).abs() < 1e-12 && (g[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn multichain_policy_keeps_start_dependence() {
        // staying put in either state: gain equals the local reward
        let mdp = TabularMdp::new(
            2,
            2,
            vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0],
            vec![0.3, 0.0, 0.9, 0.0],
        )
        .unwrap();
        let g = policy_gains(&mdp, &[0, 0]);
        assert!((g[0] - 0.3).abs() < 1e-12);
        assert!((g[1] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn trace_caches_diameter_and_gain() {
        let tr = InfiniteMdpTrace::new(
            vec![(10, TabularMdp::swap_with(2)), (5, TabularMdp::cycle(2, 2))],
            15,
            0,
        )
        .unwrap();
        assert_eq!(tr.segments[0].diameter, 1.0);
        assert!((tr.optimal_value(3).unwrap() - 0.5).abs() < 1e-9);
        assert!((tr.optimal_value(12).unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(tr.drift(3, 1.0).unwrap(), 0.0);
        assert!(tr.drift(10, 1.0).unwrap() > 0.0);
    }

    #[test]
    fn gain_shift_dominates_and_respects_bound() {
        let a: TabularMdp<f64> = TabularMdp::random(3, 2, 1);
        let b = TabularMdp::random(3, 2, 2);
        let d = compute_diameter(&a).unwrap().max(compute_diameter(&b).unwrap());
        let dj = policy_gain_shift(&a, &b, d);
        let (dr, dp) = reward_and_transition_shift(&a, &b);
        assert!(dj <= dr + d * dp + 1e-9);
        let (ga, gb) = (optimal_gain(&a).unwrap(), optimal_gain(&b).unwrap());
        assert!((ga - gb).abs() <= dj + 1e-8);
    }

    #[test]
    fn step_samples_from_the_segment() {
        let tr = InfiniteMdpTrace::new(vec![(4, TabularMdp::swap())], 4, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let tr0 = tr.step(1, 0, 0, &mut rng).unwrap();
        assert_eq!((tr0.next_state, tr0.reward), (1, 1.0));
        assert!(tr.step(5, 0, 0, &mut rng).is_err());
    }
}
