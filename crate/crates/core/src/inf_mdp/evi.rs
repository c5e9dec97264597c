//! Extended value iteration over L1 transition balls and reward intervals.
//!
//! The iteration runs on the aperiodicity-transformed operator
//! `u <- (u + T u) / 2`, which has the same gain and bias as `T` but
//! converges in span even when every policy in the confidence set induces
//! a periodic chain (the deterministic swap MDP is the canonical example).

use crate::error::{Error, Result};
use crate::scalar::{argmax, min_max, Scalar};

use super::mdp::TabularMdp;

pub const MAX_EVI_ITERATIONS: usize = 1_000_000;

/// Confidence sets for every `(s, a)`: an L1 ball `{p : ||p - centre||_1 <= radius}`
/// intersected with the simplex, and the upper end of the reward interval.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceSets<F> {
    pub states: usize,
    pub actions: usize,
    pub centre: Vec<F>,
    pub radius: Vec<F>,
    pub reward_upper: Vec<F>,
}

impl<F: Scalar> ConfidenceSets<F> {
    /// Degenerate sets containing only the given model.
    pub fn exact(mdp: &TabularMdp<F>) -> Self {
        Self {
            states: mdp.states,
            actions: mdp.actions,
            centre: mdp.transitions.clone(),
            radius: vec![F::zero(); mdp.states * mdp.actions],
            reward_upper: mdp.rewards.clone(),
        }
    }

    pub fn centre_row(&self, s: usize, a: usize) -> &[F] {
        let base = (s * self.actions + a) * self.states;
        &self.centre[base..base + self.states]
    }

    pub fn radius(&self, s: usize, a: usize) -> F {
        self.radius[s * self.actions + a]
    }

    pub fn reward_upper(&self, s: usize, a: usize) -> F {
        self.reward_upper[s * self.actions + a]
    }

    /// Adds `eta` to every transition radius.
    pub fn widened(&self, eta: F) -> Self {
        let mut out = self.clone();
        for r in out.radius.iter_mut() {
            *r = *r + eta;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EviOutput<F> {
    pub policy: Vec<usize>,
    pub bias: Vec<F>,
    pub gain: F,
    pub iterations: usize,
}

impl<F: Scalar> EviOutput<F> {
    pub fn bias_span(&self) -> F {
        crate::scalar::span(&self.bias)
    }
}

/// Indices sorted by decreasing value, ties broken by lower index.
pub fn order_desc<F: Scalar>(values: &[F]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| {
        values[j]
            .partial_cmp(&values[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    idx
}

/// Maximises `p . values` over the L1 ball around `centre` intersected with the simplex.
///
/// Mass `radius / 2` moves onto the best state and is drained from the worst
/// states first. `order` must come from [`order_desc`] on the same `values`.
pub fn optimistic_transition<F: Scalar>(centre: &[F], radius: F, order: &[usize], out: &mut [F]) {
    out.copy_from_slice(centre);
    let best = order[0];
    out[best] = (centre[best] + radius / F::lit(2.0)).min(F::one());
    let mut total = out.iter().fold(F::zero(), |acc, &x| acc + x);
    for &j in order.iter().rev() {
        if total <= F::one() {
            break;
        }
        if j == best {
            continue;
        }
        let cut = (total - F::one()).min(out[j]);
        out[j] = out[j] - cut;
        total = total - cut;
    }
}

pub fn optimistic_value<F: Scalar>(centre: &[F], radius: F, order: &[usize], values: &[F], scratch: &mut [F]) -> F {
    optimistic_transition(centre, radius, order, scratch);
    scratch.iter().zip(values).fold(F::zero(), |acc, (&p, &v)| acc + p * v)
}

/// One application of the optimistic Bellman operator: returns `(T u, greedy policy)`.
pub fn bellman<F: Scalar>(sets: &ConfidenceSets<F>, u: &[F]) -> (Vec<F>, Vec<usize>) {
    let order = order_desc(u);
    let mut scratch = vec![F::zero(); sets.states];
    let mut next = vec![F::zero(); sets.states];
    let mut policy = vec![0; sets.states];
    let mut q = vec![F::zero(); sets.actions];
    for s in 0..sets.states {
        for (a, qa) in q.iter_mut().enumerate() {
            *qa = sets.reward_upper(s, a)
                + optimistic_value(sets.centre_row(s, a), sets.radius(s, a), &order, u, &mut scratch);
        }
        let best = argmax(&q);
        policy[s] = best;
        next[s] = q[best];
    }
    (next, policy)
}

/// Extended value iteration to span accuracy `epsilon`.
///
/// The result satisfies, for every state `s`,
/// `gain + bias(s) >= max_a [r_up(s,a) + max_p p . bias] - epsilon / 2` and
/// `gain + bias(s) <= r_up(s,pi(s)) + max_p p . bias + epsilon / 2`.
pub fn evi<F: Scalar>(sets: &ConfidenceSets<F>, epsilon: F) -> Result<EviOutput<F>> {
    let half = F::lit(0.5);
    let mut u = vec![F::zero(); sets.states];
    let mut residual = F::infinity();
    for iteration in 1..=MAX_EVI_ITERATIONS {
        let (tu, policy) = bellman(sets, &u);
        let increment: Vec<F> = tu.iter().zip(&u).map(|(&a, &b)| a - b).collect();
        let (lo, hi) = min_max(&increment);
        residual = hi - lo;
        if residual <= epsilon {
            let base = min_max(&u).0;
            return Ok(EviOutput {
                policy,
                bias: u.iter().map(|&x| x - base).collect(),
                gain: (hi + lo) * half,
                iterations: iteration,
            });
        }
        for (ui, &ti) in u.iter_mut().zip(&tu) {
            *ui = (*ui + ti) * half;
        }
        let base = min_max(&u).0;
        for ui in u.iter_mut() {
            *ui = *ui - base;
        }
    }
    Err(Error::NonConvergence {
        solver: "extended value iteration",
        iterations: MAX_EVI_ITERATIONS,
        residual: residual.as_f64(),
    })
}

/// Optimal average reward of a known communicating MDP.
pub fn optimal_gain<F: Scalar>(mdp: &TabularMdp<F>) -> Result<F> {
    let eps = F::lit(1e-9).max(F::epsilon() * F::lit(64.0));
    Ok(evi(&ConfidenceSets::exact(mdp), eps)?.gain)
}

/// Optimal gain together with the greedy policy and bias.
pub fn solve_exact<F: Scalar>(mdp: &TabularMdp<F>) -> Result<EviOutput<F>> {
    let eps = F::lit(1e-9).max(F::epsilon() * F::lit(64.0));
    evi(&ConfidenceSets::exact(mdp), eps)
}

/// Worst-case Bellman residuals `(lower, upper)` of an EVI solution: the
/// largest violation of the two optimistic Bellman inequalities, each of
/// which must be at most `epsilon / 2`.
pub fn bellman_residuals<F: Scalar>(sets: &ConfidenceSets<F>, out: &EviOutput<F>) -> (F, F) {
    let order = order_desc(&out.bias);
    let mut scratch = vec![F::zero(); sets.states];
    let mut lower = F::neg_infinity();
    let mut upper = F::neg_infinity();
    for s in 0..sets.states {
        let lhs = out.gain + out.bias[s];
        let q: Vec<F> = (0..sets.actions)
            .map(|a| {
                sets.reward_upper(s, a)
                    + optimistic_value(
                        sets.centre_row(s, a),
                        sets.radius(s, a),
                        &order,
                        &out.bias,
                        &mut scratch,
                    )
            })
            .collect();
        let best = q.iter().fold(F::neg_infinity(), |m, &x| m.max(x));
        lower = lower.max(best - lhs);
        upper = upper.max(lhs - q[out.policy[s]]);
    }
    (lower, upper)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_state_gain_is_best_reward() {
        let mdp = TabularMdp::<f64>::new(1, 3, vec![1.0; 3], vec![0.2, 0.7, 0.4]).unwrap();
        let out = evi(&ConfidenceSets::exact(&mdp), 1e-9).unwrap();
        assert!((out.gain - 0.7).abs() < 1e-12);
        assert_eq!(out.bias, vec![0.0]);
        assert_eq!(out.policy, vec![1]);
    }

    #[test]
    fn periodic_swap_converges() {
        // only deterministic policy alternates rewards 1, 0, 1, 0
        let mdp: TabularMdp<f64> = TabularMdp::swap();
        let out = evi(&ConfidenceSets::exact(&mdp), 1e-10).unwrap();
        assert!((out.gain - 0.5).abs() < 1e-9);
        assert!((out.bias_span() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn optimistic_transition_moves_mass_to_best() {
        let values = [0.0f64, 1.0, 0.5];
        let order = order_desc(&values);
        assert_eq!(order, vec![1, 2, 0]);
        let mut out = [0.0f64; 3];
        optimistic_transition(&[0.5, 0.2, 0.3], 0.4, &order, &mut out);
        assert!((out[1] - 0.4).abs() < 1e-12);
        assert!((out[0] - 0.3).abs() < 1e-12);
        assert!((out[2] - 0.3).abs() < 1e-12);
        // a radius of 2 reaches the whole simplex
        optimistic_transition(&[0.5, 0.2, 0.3], 2.0, &order, &mut out);
        assert_eq!(out, [0.0, 1.0, 0.0]);
    }

    #[test]
    fn runs_in_single_precision() {
        let mdp: TabularMdp<f32> = TabularMdp::river_swim(4);
        let gain32 = optimal_gain(&mdp).unwrap();
        let gain64 = optimal_gain(&mdp.cast::<f64>()).unwrap();
        assert!((gain32 as f64 - gain64).abs() < 1e-4);
    }

    #[test]
    fn residuals_within_half_epsilon() {
        let mdp: TabularMdp<f64> = TabularMdp::random(3, 2, 11);
        let sets = ConfidenceSets::exact(&mdp).widened(0.3);
        let eps = 1e-4;
        let out = evi(&sets, eps).unwrap();
        let (lo, hi) = bellman_residuals(&sets, &out);
        assert!(lo <= eps / 2.0 + 1e-12, "lower residual {lo}");
        assert!(hi <= eps / 2.0 + 1e-12, "upper residual {hi}");
    }
}
