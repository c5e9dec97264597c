use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::bandit::bernoulli;
use crate::base::{Episode, EpisodeStep, LayerPolicy};
use crate::error::{Error, Result};

/// Finite-horizon MDP with layer-dependent transitions and rewards.
///
/// `p[((h * S + s) * A + a) * S + s']`, `r[(h * S + s) * A + a]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodicMdp {
    pub states: usize,
    pub actions: usize,
    pub layers: usize,
    pub transitions: Vec<f64>,
    pub rewards: Vec<f64>,
}

impl EpisodicMdp {
    pub fn new(
        states: usize,
        actions: usize,
        layers: usize,
        transitions: Vec<f64>,
        rewards: Vec<f64>,
        field: &str,
    ) -> Result<Self> {
        if states == 0 || actions == 0 || layers == 0 {
            return Err(Error::config(field, "S, A and H must be positive"));
        }
        let rows = layers * states * actions;
        if transitions.len() != rows * states || rewards.len() != rows {
            return Err(Error::config(field, "table sizes do not match S, A, H"));
        }
        for i in 0..rows {
            let (h, s, a) = (i / (states * actions), (i / actions) % states, i % actions);
            let row = &transitions[i * states..(i + 1) * states];
            if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::config(
                    format!("{field}.transitions[{h}][{s}][{a}]"),
                    "not a probability vector",
                ));
            }
            if !(0.0..=1.0).contains(&rewards[i]) {
                return Err(Error::config(
                    format!("{field}.rewards[{h}][{s}][{a}]"),
                    "outside [0, 1]",
                ));
            }
        }
        Ok(Self {
            states,
            actions,
            layers,
            transitions,
            rewards,
        })
    }

    /// Nested `[h][s][a][s']` and `[h][s][a]` tables.
    pub fn from_tables(transitions: &[Vec<Vec<Vec<f64>>>], rewards: &[Vec<Vec<f64>>], field: &str) -> Result<Self> {
        let layers = transitions.len();
        let states = transitions.first().map_or(0, |l| l.len());
        let actions = transitions.first().and_then(|l| l.first()).map_or(0, |s| s.len());
        if rewards.len() != layers {
            return Err(Error::config(
                format!("{field}.rewards"),
                format!("expected {layers} layers"),
            ));
        }
        let mut p = Vec::new();
        let mut r = Vec::new();
        for (h, (pl, rl)) in transitions.iter().zip(rewards).enumerate() {
            if pl.len() != states || rl.len() != states {
                return Err(Error::config(
                    format!("{field}[{h}]"),
                    format!("expected {states} states"),
                ));
            }
            for (s, (ps, rs)) in pl.iter().zip(rl).enumerate() {
                if ps.len() != actions || rs.len() != actions {
                    return Err(Error::config(
                        format!("{field}[{h}][{s}]"),
                        format!("expected {actions} actions"),
                    ));
                }
                for (a, row) in ps.iter().enumerate() {
                    if row.len() != states {
                        return Err(Error::config(
                            format!("{field}.transitions[{h}][{s}][{a}]"),
                            format!("expected {states} entries"),
                        ));
                    }
                    p.extend_from_slice(row);
                }
                r.extend_from_slice(rs);
            }
        }
        Self::new(states, actions, layers, p, r, field)
    }

    /// Rows drawn as `0.05 + U(0, 1)` normalised, rewards uniform.
    pub fn random(states: usize, actions: usize, layers: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = layers * states * actions;
        let mut p: Vec<f64> = (0..rows * states).map(|_| 0.05 + rng.gen::<f64>()).collect();
        for row in p.chunks_mut(states) {
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= total);
        }
        let r = (0..rows).map(|_| rng.gen::<f64>()).collect();
        Self::new(states, actions, layers, p, r, "random").expect("random episodic MDP is valid")
    }

    fn idx(&self, h: usize, s: usize, a: usize) -> usize {
        (h * self.states + s) * self.actions + a
    }

    pub fn row(&self, h: usize, s: usize, a: usize) -> &[f64] {
        let i = self.idx(h, s, a);
        &self.transitions[i * self.states..(i + 1) * self.states]
    }

    pub fn reward(&self, h: usize, s: usize, a: usize) -> f64 {
        self.rewards[self.idx(h, s, a)]
    }

    /// Optimal values `V*_h(s)` for `h = 0..=H` by backward induction.
    pub fn optimal_values(&self) -> Vec<Vec<f64>> {
        let mut v = vec![vec![0.0; self.states]; self.layers + 1];
        for h in (0..self.layers).rev() {
            for s in 0..self.states {
                v[h][s] = (0..self.actions)
                    .map(|a| self.reward(h, s, a) + dot(self.row(h, s, a), &v[h + 1]))
                    .fold(f64::NEG_INFINITY, f64::max);
            }
        }
        v
    }

    /// Values of a fixed layer policy, `V^pi_h(s)`.
    pub fn policy_values(&self, policy: &LayerPolicy) -> Vec<Vec<f64>> {
        let mut v = vec![vec![0.0; self.states]; self.layers + 1];
        for h in (0..self.layers).rev() {
            for s in 0..self.states {
                let a = policy.action(h, s);
                v[h][s] = self.reward(h, s, a) + dot(self.row(h, s, a), &v[h + 1]);
            }
        }
        v
    }

    fn sample_next<R: Rng + ?Sized>(&self, h: usize, s: usize, a: usize, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let row = self.row(h, s, a);
        let mut acc = 0.0;
        for (next, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return next;
            }
        }
        row.iter().rposition(|&p| p > 0.0).unwrap_or(self.states - 1)
    }

    /// Runs `policy` from `initial` for `H` steps with Bernoulli rewards.
    pub fn rollout<R: Rng + ?Sized>(&self, initial: usize, policy: &LayerPolicy, rng: &mut R) -> Episode {
        let mut s = initial;
        let mut steps = Vec::with_capacity(self.layers);
        for h in 0..self.layers {
            let a = policy.action(h, s);
            let reward = bernoulli(self.reward(h, s, a), rng);
            let next = self.sample_next(h, s, a, rng);
            steps.push(EpisodeStep {
                state: s,
                action: a,
                reward,
                next_state: next,
            });
            s = next;
        }
        Episode { steps }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Piecewise-stationary sequence of episodic MDPs, one per episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodicMdpTrace {
    pub horizon: usize,
    pub initial_state: usize,
    /// `(first episode, length, model)`
    pub segments: Vec<(usize, usize, EpisodicMdp)>,
}

impl EpisodicMdpTrace {
    pub fn new(pieces: Vec<(usize, EpisodicMdp)>, horizon: usize, initial_state: usize) -> Result<Self> {
        let first = &pieces
            .first()
            .ok_or_else(|| Error::config("env.segments", "need at least one segment"))?
            .1;
        let shape = (first.states, first.actions, first.layers);
        if initial_state >= shape.0 {
            return Err(Error::config(
                "env.initial_state",
                format!("{initial_state} >= S = {}", shape.0),
            ));
        }
        let mut start = 1;
        let mut segments = Vec::new();
        for (i, (len, mdp)) in pieces.into_iter().enumerate() {
            if len == 0 {
                return Err(Error::config(format!("env.segments[{i}].length"), "must be positive"));
            }
            if (mdp.states, mdp.actions, mdp.layers) != shape {
                return Err(Error::config(
                    format!("env.segments[{i}]"),
                    "S, A, H differ from the first segment",
                ));
            }
            segments.push((start, len, mdp));
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

    pub fn model(&self, t: usize) -> Result<&EpisodicMdp> {
        if t == 0 || t > self.horizon {
            return Err(Error::RoundOutOfRange {
                t,
                horizon: self.horizon,
            });
        }
        let i = self.segments.partition_point(|s| s.0 <= t) - 1;
        Ok(&self.segments[i].2)
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        let m = &self.segments[0].2;
        (m.states, m.actions, m.layers)
    }

    /// `V*_1(s_1) / H`.
    pub fn optimal_value(&self, t: usize) -> Result<f64> {
        let m = self.model(t)?;
        Ok(m.optimal_values()[0][self.initial_state] / m.layers as f64)
    }

    pub fn value(&self, t: usize, policy: &LayerPolicy) -> Result<f64> {
        let m = self.model(t)?;
        Ok(m.policy_values(policy)[0][self.initial_state] / m.layers as f64)
    }

    /// `sum_h max |r_h - r'_h| + H sum_h max ||p_h - p'_h||_1` between
    /// episodes `t` and `t + 1`, which is the usual drift divided by `H`.
    pub fn drift(&self, t: usize) -> Result<f64> {
        if t >= self.horizon {
            return Ok(0.0);
        }
        let (a, b) = (self.model(t)?, self.model(t + 1)?);
        if std::ptr::eq(a, b) {
            return Ok(0.0);
        }
        let (ns, na, nh) = (a.states, a.actions, a.layers);
        let mut dr = 0.0;
        let mut dp = 0.0;
        for h in 0..nh {
            let mut mr: f64 = 0.0;
            let mut mp: f64 = 0.0;
            for s in 0..ns {
                for x in 0..na {
                    mr = mr.max((a.reward(h, s, x) - b.reward(h, s, x)).abs());
                    let l1: f64 = a
                        .row(h, s, x)
                        .iter()
                        .zip(b.row(h, s, x))
                        .map(|(p, q)| (p - q).abs())
                        .sum();
                    mp = mp.max(l1);
                }
            }
            dr += mr;
            dp += mp;
        }
        Ok(dr + nh as f64 * dp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Every deterministic layer policy of a small MDP.
    fn all_policies(s: usize, a: usize, h: usize) -> Vec<LayerPolicy> {
        let cells = s * h;
        let total = a.pow(cells as u32);
        (0..total)
            .map(|mut code| {
                let table = (0..cells)
                    .map(|_| {
                        let x = code % a;
                        code /= a;
                        x
                    })
                    .collect();
                LayerPolicy {
                    horizon: h,
                    states: s,
                    table,
                }
            })
            .collect()
    }

    #[test]
    fn backward_induction_matches_enumeration() {
        for seed in 0..5 {
            let mdp = EpisodicMdp::random(2, 2, 3, seed);
            let trace = EpisodicMdpTrace::new(vec![(4, mdp)], 4, 0).unwrap();
            let best = all_policies(2, 2, 3)
                .iter()
                .map(|p| trace.value(1, p).unwrap())
                .fold(f64::NEG_INFINITY, f64::max);
            assert!((trace.optimal_value(1).unwrap() - best).abs() < 1e-12);
        }
    }

    #[test]
    fn rollout_mean_tracks_policy_value() {
        let mdp = EpisodicMdp::random(2, 2, 3, 9);
        let pol = LayerPolicy {
            horizon: 3,
            states: 2,
            table: vec![1, 0, 0, 1, 1, 1],
        };
        let v = mdp.policy_values(&pol)[0][0] / 3.0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        use crate::base::Reward;
        let n = 40_000;
        let mean: f64 = (0..n).map(|_| mdp.rollout(0, &pol, &mut rng).reward()).sum::<f64>() / n as f64;
        // per-episode reward lies in [0, 1], so its sd is at most 1/2
        assert!((mean - v).abs() < 4.0 * 0.5 / (n as f64).sqrt());
    }

    #[test]
    fn drift_dominates_value_change() {
        let a = EpisodicMdp::random(2, 2, 2, 1);
        let b = EpisodicMdp::random(2, 2, 2, 2);
        let trace = EpisodicMdpTrace::new(vec![(1, a), (1, b)], 2, 0).unwrap();
        let d = trace.drift(1).unwrap();
        for p in all_policies(2, 2, 2) {
            let change = (trace.value(1, &p).unwrap() - trace.value(2, &p).unwrap()).abs();
            assert!(change <= d + 1e-12);
        }
        assert_eq!(trace.drift(2).unwrap(), 0.0);
    }

    #[test]
    fn tables_are_validated() {
        let p = vec![vec![vec![vec![0.5, 0.6]]]];
        let r = vec![vec![vec![0.1]]];
        assert!(EpisodicMdp::from_tables(&p, &r, "env.segments[0]").is_err());
    }
}
