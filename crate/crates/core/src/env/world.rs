//! Stateful views of an environment that a learner interacts with.

use rand::Rng;

use super::{EnvModel, EpisodicMdpTrace, InfiniteMdpTrace};
use crate::base::{Episode, LayerPolicy, PolicyIndex, PolicyLabel, Reward};
use crate::error::{Error, Result};
use crate::inf_mdp::Transition;

pub trait World {
    type Obs: Clone;
    type Action: Clone + PolicyLabel;
    type Feedback: Reward;

    fn horizon(&self) -> usize;

    fn observe(&self) -> Self::Obs;

    /// Plays `action` at round `t` and samples the feedback.
    fn step<R: Rng + ?Sized>(&mut self, t: usize, action: &Self::Action, rng: &mut R) -> Result<Self::Feedback>;

    fn optimal_value(&self, t: usize) -> Result<f64>;

    /// Expected reward `f_t(action)` when it is cheap to compute.
    fn mean_reward(&self, _t: usize, _action: &Self::Action) -> Option<f64> {
        None
    }
}

/// Multi-armed, linear and generalised-linear bandits with Bernoulli rewards.
#[derive(Debug, Clone, Copy)]
pub struct BanditWorld<'a> {
    env: &'a EnvModel,
}

impl<'a> BanditWorld<'a> {
    pub fn new(env: &'a EnvModel) -> Result<Self> {
        match env {
            EnvModel::Mab(_) | EnvModel::Linear(_) => Ok(Self { env }),
            _ => Err(Error::config("env.kind", format!("{} is not a bandit", env.kind()))),
        }
    }

    fn value(&self, t: usize, action: PolicyIndex) -> Result<f64> {
        match self.env {
            EnvModel::Mab(m) => m.value(t, action),
            EnvModel::Linear(l) => l.value(t, action),
            _ => unreachable!("checked in new"),
        }
    }
}

impl World for BanditWorld<'_> {
    type Obs = ();
    type Action = PolicyIndex;
    type Feedback = f64;

    fn horizon(&self) -> usize {
        self.env.horizon()
    }

    fn observe(&self) {}

    fn step<R: Rng + ?Sized>(&mut self, t: usize, action: &PolicyIndex, rng: &mut R) -> Result<f64> {
        let p = self.value(t, *action)?;
        Ok(super::bernoulli(p, rng))
    }

    fn optimal_value(&self, t: usize) -> Result<f64> {
        self.env.optimal_value(t)
    }

    fn mean_reward(&self, t: usize, action: &PolicyIndex) -> Option<f64> {
        self.value(t, *action).ok()
    }
}

/// Finite-horizon MDP where each round is one whole episode.
#[derive(Debug, Clone, Copy)]
pub struct EpisodicWorld<'a> {
    trace: &'a EpisodicMdpTrace,
}

impl<'a> EpisodicWorld<'a> {
    pub fn new(env: &'a EnvModel) -> Result<Self> {
        match env {
            EnvModel::Episodic(trace) => Ok(Self { trace }),
            _ => Err(Error::config("env.kind", format!("{} is not episodic", env.kind()))),
        }
    }
}

impl World for EpisodicWorld<'_> {
    type Obs = ();
    type Action = LayerPolicy;
    type Feedback = Episode;

    fn horizon(&self) -> usize {
        self.trace.horizon
    }

    fn observe(&self) {}

    fn step<R: Rng + ?Sized>(&mut self, t: usize, action: &LayerPolicy, rng: &mut R) -> Result<Episode> {
        let m = self.trace.model(t)?;
        if action.horizon != m.layers || action.states != m.states {
            return Err(Error::FeedbackMismatch("policy shape differs from the MDP".into()));
        }
        Ok(m.rollout(self.trace.initial_state, action, rng))
    }

    fn optimal_value(&self, t: usize) -> Result<f64> {
        self.trace.optimal_value(t)
    }

    fn mean_reward(&self, t: usize, action: &LayerPolicy) -> Option<f64> {
        self.trace.value(t, action).ok()
    }
}

/// Average-reward MDP; the physical state persists across restarts of the learner.
#[derive(Debug, Clone)]
pub struct MdpWorld<'a> {
    trace: &'a InfiniteMdpTrace,
    state: usize,
}

impl<'a> MdpWorld<'a> {
    pub fn new(env: &'a EnvModel) -> Result<Self> {
        match env {
            EnvModel::Infinite(trace) => Ok(Self::from_trace(trace)),
            _ => Err(Error::config(
                "env.kind",
                format!("{} is not an infinite-horizon MDP", env.kind()),
            )),
        }
    }

    pub fn from_trace(trace: &'a InfiniteMdpTrace) -> Self {
        Self {
            trace,
            state: trace.initial_state,
        }
    }

    pub fn trace(&self) -> &'a InfiniteMdpTrace {
        self.trace
    }

    pub fn state(&self) -> usize {
        self.state
    }
}

impl World for MdpWorld<'_> {
    type Obs = usize;
    type Action = PolicyIndex;
    type Feedback = Transition;

    fn horizon(&self) -> usize {
        self.trace.horizon
    }

    fn observe(&self) -> usize {
        self.state
    }

    fn step<R: Rng + ?Sized>(&mut self, t: usize, action: &PolicyIndex, rng: &mut R) -> Result<Transition> {
        let tr = self.trace.step(t, self.state, action.0, rng)?;
        self.state = tr.next_state;
        Ok(tr)
    }

    fn optimal_value(&self, t: usize) -> Result<f64> {
        self.trace.optimal_value(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bandit_world_samples_bernoulli() {
        let env = EnvModel::from_json(r#"{"kind": "mab", "T": 2, "segments": [{"length": 2, "means": [0.0, 1.0]}]}"#)
            .unwrap();
        let mut w = BanditWorld::new(&env).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(w.step(1, &PolicyIndex(0), &mut rng).unwrap(), 0.0);
        assert_eq!(w.step(1, &PolicyIndex(1), &mut rng).unwrap(), 1.0);
        assert!(w.step(1, &PolicyIndex(2), &mut rng).is_err());
        assert!(EpisodicWorld::new(&env).is_err());
    }

    #[test]
    fn mdp_world_tracks_state() {
        let env = EnvModel::from_json(
            r#"{"kind": "infinite", "T": 3, "S": 2, "A": 1, "segments": [{"length": 3, "preset": "swap"}]}"#,
        )
        .unwrap();
        let mut w = MdpWorld::new(&env).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(w.observe(), 0);
        w.step(1, &PolicyIndex(0), &mut rng).unwrap();
        assert_eq!(w.observe(), 1);
    }
}
