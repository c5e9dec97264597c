use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::mdp::TabularMdp;

const MAX_HITTING_ITERATIONS: usize = 10_000_000;

/// Minimal expected hitting times to `target` from every state, by value
/// iteration on `h(s) = 1 + min_a sum_x p(x|s,a) h(x)`, `h(target) = 0`.
pub fn hitting_times<F: Scalar>(mdp: &TabularMdp<F>, target: usize, tol: F) -> Result<Vec<F>> {
    let n = mdp.states;
    if let Some(s) = unreachable_from(mdp, target) {
        return Err(Error::NotCommunicating(format!(
            "state {target} is unreachable from state {s}"
        )));
    }
    let mut h = vec![F::zero(); n];
    for _ in 0..MAX_HITTING_ITERATIONS {
        let mut next = vec![F::zero(); n];
        let mut change = F::zero();
        for s in 0..n {
            if s == target {
                continue;
            }
            let mut best = F::infinity();
            for a in 0..mdp.actions {
                let row = mdp.row(s, a);
                let v = row.iter().zip(&h).fold(F::zero(), |acc, (&p, &hv)| acc + p * hv);
                best = best.min(v);
            }
            next[s] = F::one() + best;
            change = change.max((next[s] - h[s]).abs());
        }
        h = next;
        if change <= tol {
            return Ok(h);
        }
    }
    Err(Error::NotCommunicating(format!(
        "hitting-time iteration for target {target} did not settle"
    )))
}

/// First state with no positive-probability path to `target`, if any.
fn unreachable_from<F: Scalar>(mdp: &TabularMdp<F>, target: usize) -> Option<usize> {
    let mut reaches = vec![false; mdp.states];
    reaches[target] = true;
    let mut changed = true;
    while changed {
        changed = false;
        for s in 0..mdp.states {
            if reaches[s] {
                continue;
            }
            let hit = (0..mdp.actions).any(|a| mdp.row(s, a).iter().zip(&reaches).any(|(&p, &r)| r && p > F::zero()));
            if hit {
                reaches[s] = true;
                changed = true;
            }
        }
    }
    reaches.iter().position(|&r| !r)
}

/// Diameter `max_{s != s'} min_pi E[time to reach s' from s]`.
pub fn compute_diameter<F: Scalar>(mdp: &TabularMdp<F>) -> Result<F> {
    let tol = F::lit(1e-9).max(F::epsilon() * F::lit(64.0));
    let mut diameter = F::zero();
    for target in 0..mdp.states {
        let h = hitting_times(mdp, target, tol)?;
        for (s, &v) in h.iter().enumerate() {
            if s != target {
                diameter = diameter.max(v);
            }
        }
    }
    Ok(diameter)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn swap_has_unit_diameter() {
        let mdp: TabularMdp<f64> = TabularMdp::swap();
        assert!((compute_diameter(&mdp).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cycle_diameter_is_path_length() {
        for s in 2..7 {
            let mdp: TabularMdp<f64> = TabularMdp::cycle(s, 2);
            let d = compute_diameter(&mdp).unwrap();
            assert!((d - (s as f64 - 1.0)).abs() < 1e-9, "S={s}: {d}");
        }
    }

    #[test]
    fn absorbing_state_is_rejected() {
        // state 1 never leaves
        let mdp = TabularMdp::new(2, 1, vec![0.5, 0.5, 0.0, 1.0], vec![0.0, 0.0]).unwrap();
        assert!(matches!(compute_diameter(&mdp), Err(Error::NotCommunicating(_))));
    }
}
