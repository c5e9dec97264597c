use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Tabular MDP with `states × actions` transition rows and mean rewards in `[0, 1]`.
///
/// Transitions are stored row-major as `p[(s * actions + a) * states + s']`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularMdp<F> {
    pub states: usize,
    pub actions: usize,
    pub transitions: Vec<F>,
    pub rewards: Vec<F>,
}

impl<F: Scalar> TabularMdp<F> {
    pub fn new(states: usize, actions: usize, transitions: Vec<F>, rewards: Vec<F>) -> Result<Self> {
        if states == 0 || actions == 0 {
            return Err(Error::config("mdp", "need at least one state and one action"));
        }
        if transitions.len() != states * actions * states {
            return Err(Error::config(
                "mdp.transitions",
                format!(
                    "expected {} entries, got {}",
                    states * actions * states,
                    transitions.len()
                ),
            ));
        }
        if rewards.len() != states * actions {
            return Err(Error::config(
                "mdp.rewards",
                format!("expected {} entries, got {}", states * actions, rewards.len()),
            ));
        }
        let tol = F::lit(1e-9);
        for s in 0..states {
            for a in 0..actions {
                let row = &transitions[(s * actions + a) * states..(s * actions + a + 1) * states];
                if row.iter().any(|&p| p < F::zero() || !p.is_finite()) {
                    return Err(Error::config(
                        format!("mdp.transitions[{s}][{a}]"),
                        "entries must be finite and non-negative",
                    ));
                }
                let total = row.iter().fold(F::zero(), |acc, &p| acc + p);
                if (total - F::one()).abs() > tol {
                    return Err(Error::config(
                        format!("mdp.transitions[{s}][{a}]"),
                        format!("row sums to {total}, expected 1"),
                    ));
                }
                let r = rewards[s * actions + a];
                if !(r >= F::zero() && r <= F::one()) {
                    return Err(Error::config(
                        format!("mdp.rewards[{s}][{a}]"),
                        format!("{r} outside [0, 1]"),
                    ));
                }
            }
        }
        Ok(Self {
            states,
            actions,
            transitions,
            rewards,
        })
    }

    /// Builds from nested `[s][a][s']` and `[s][a]` tables.
    pub fn from_tables(transitions: &[Vec<Vec<F>>], rewards: &[Vec<F>]) -> Result<Self> {
        let states = transitions.len();
        let actions = transitions.first().map_or(0, |row| row.len());
        let mut flat = Vec::with_capacity(states * actions * states);
        for (s, per_action) in transitions.iter().enumerate() {
            if per_action.len() != actions {
                return Err(Error::config(
                    format!("mdp.transitions[{s}]"),
                    format!("expected {actions} actions"),
                ));
            }
            for (a, row) in per_action.iter().enumerate() {
                if row.len() != states {
                    return Err(Error::config(
                        format!("mdp.transitions[{s}][{a}]"),
                        format!("expected {states} next-state probabilities"),
                    ));
                }
                flat.extend_from_slice(row);
            }
        }
        if rewards.len() != states || rewards.iter().any(|r| r.len() != actions) {
            return Err(Error::config(
                "mdp.rewards",
                format!("expected a {states}x{actions} table"),
            ));
        }
        let r = rewards.iter().flatten().copied().collect();
        Self::new(states, actions, flat, r)
    }

    pub fn row(&self, s: usize, a: usize) -> &[F] {
        let base = (s * self.actions + a) * self.states;
        &self.transitions[base..base + self.states]
    }

    pub fn reward(&self, s: usize, a: usize) -> F {
        self.rewards[s * self.actions + a]
    }

    /// Every action swaps between the two states; reward 1 in state 0, 0 in state 1.
    pub fn swap() -> Self {
        Self::swap_with(1)
    }

    pub fn swap_with(actions: usize) -> Self {
        let mut p = Vec::new();
        let mut r = Vec::new();
        for s in 0..2 {
            for _ in 0..actions {
                p.extend_from_slice(&[F::from_count(s), F::from_count(1 - s)]);
                r.push(if s == 0 { F::one() } else { F::zero() });
            }
        }
        Self::new(2, actions, p, r).expect("swap MDP is valid")
    }

    /// Deterministic cycle: action 0 advances `s -> s+1 mod S`, other actions stay.
    /// Reward 1 only for staying in the last state.
    pub fn cycle(states: usize, actions: usize) -> Self {
        let mut p = vec![F::zero(); states * actions * states];
        let mut r = vec![F::zero(); states * actions];
        for s in 0..states {
            for a in 0..actions {
                let next = if a == 0 { (s + 1) % states } else { s };
                p[(s * actions + a) * states + next] = F::one();
                if s == states - 1 && a != 0 {
                    r[s * actions + a] = F::one();
                }
            }
        }
        if actions == 1 {
            r[(states - 1) * actions] = F::one();
        }
        Self::new(states, actions, p, r).expect("cycle MDP is valid")
    }

    /// RiverSwim with the usual normalised rewards: action 0 swims left
    /// deterministically, action 1 swims against the current.
    pub fn river_swim(states: usize) -> Self {
        assert!(states >= 2, "river swim needs at least two states");
        let actions = 2;
        let mut p = vec![F::zero(); states * actions * states];
        let mut r = vec![F::zero(); states * actions];
        let idx = |s: usize, a: usize, n: usize| (s * actions + a) * states + n;
        for s in 0..states {
            p[idx(s, 0, s.saturating_sub(1))] = F::one();
            if s == 0 {
                p[idx(s, 1, 0)] = F::lit(0.6);
                p[idx(s, 1, 1)] = F::lit(0.4);
            } else if s == states - 1 {
                p[idx(s, 1, s)] = F::lit(0.6);
                p[idx(s, 1, s - 1)] = F::lit(0.4);
            } else {
                p[idx(s, 1, s + 1)] = F::lit(0.35);
                p[idx(s, 1, s)] = F::lit(0.6);
                p[idx(s, 1, s - 1)] = F::lit(0.05);
            }
        }
        r[0] = F::lit(0.005);
        r[(states - 1) * actions + 1] = F::one();
        Self::new(states, actions, p, r).expect("river swim is valid")
    }

    /// Dense random MDP: Dirichlet(1)-like rows and uniform rewards.
    /// Every transition probability is positive, so the MDP is communicating.
    pub fn random(states: usize, actions: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Vec::with_capacity(states * actions * states);
        let mut r = Vec::with_capacity(states * actions);
        for _ in 0..states * actions {
            let raw: Vec<f64> = (0..states).map(|_| 0.05 + rng.gen::<f64>()).collect();
            let total: f64 = raw.iter().sum();
            p.extend(raw.iter().map(|x| F::lit(x / total)));
            r.push(F::lit(rng.gen::<f64>()));
        }
        normalise_rows(&mut p, states);
        Self::new(states, actions, p, r).expect("random MDP is valid")
    }

    pub fn cast<G: Scalar>(&self) -> TabularMdp<G> {
        TabularMdp {
            states: self.states,
            actions: self.actions,
            transitions: self.transitions.iter().map(|x| G::lit(x.as_f64())).collect(),
            rewards: self.rewards.iter().map(|x| G::lit(x.as_f64())).collect(),
        }
    }

    /// Samples the next state of `(s, a)` by inverse CDF.
    pub fn sample_next<R: Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> usize {
        let u = F::lit(rng.gen::<f64>());
        let row = self.row(s, a);
        let mut acc = F::zero();
        for (next, &p) in row.iter().enumerate() {
            acc = acc + p;
            if u < acc {
                return next;
            }
        }
        // rounding can leave the CDF a hair below 1
        row.iter().rposition(|&p| p > F::zero()).unwrap_or(self.states - 1)
    }
}

fn normalise_rows<F: Scalar>(p: &mut [F], states: usize) {
    for row in p.chunks_mut(states) {
        let total = row.iter().fold(F::zero(), |acc, &x| acc + x);
        for x in row.iter_mut() {
            *x = *x / total;
        }
    }
}
