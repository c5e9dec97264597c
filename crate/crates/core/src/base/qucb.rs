use serde::{Deserialize, Serialize};

use super::{BaseAlgorithm, Confidence, PolicyLabel, Prediction, RateFunction, Reward, Snapshot, StepSignal};
use crate::error::{Error, Result};

/// Deterministic non-stationary policy `pi[h][s]` for one episode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerPolicy {
    pub horizon: usize,
    pub states: usize,
    pub table: Vec<usize>,
}

impl LayerPolicy {
    pub fn action(&self, h: usize, s: usize) -> usize {
        self.table[h * self.states + s]
    }
}

impl PolicyLabel for LayerPolicy {
    /// Actions listed layer by layer, layers separated by `/`.
    fn label(&self) -> String {
        self.table
            .chunks(self.states)
            .map(|layer| layer.iter().map(|a| a.to_string()).collect::<String>())
            .collect::<Vec<_>>()
            .join("/")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStep {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
}

/// Trajectory of one episode; its framework reward is the return divided by `H`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub steps: Vec<EpisodeStep>,
}

impl Reward for Episode {
    fn reward(&self) -> f64 {
        if self.steps.is_empty() {
            return 0.0;
        }
        self.steps.iter().map(|s| s.reward).sum::<f64>() / self.steps.len() as f64
    }
}

/// Hoeffding-style optimistic Q-learning for episodic tabular MDPs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QUcb {
    states: usize,
    actions: usize,
    horizon: usize,
    initial_state: usize,
    bonus_scale: f64,
    log_term: f64,
    /// `q[(h * S + s) * A + a]`
    q: Vec<f64>,
    n: Vec<u64>,
    /// `v[h * S + s]` for `h = 0..=H`, the last layer pinned at zero.
    v: Vec<f64>,
    episodes: u64,
}

impl QUcb {
    pub const DEFAULT_BONUS: f64 = 2.0;

    pub fn new(
        states: usize,
        actions: usize,
        horizon: usize,
        initial_state: usize,
        bonus_scale: f64,
        conf: Confidence,
    ) -> Result<Self> {
        if states == 0 || actions == 0 || horizon == 0 {
            return Err(Error::config("qucb", "S, A and H must be positive"));
        }
        if initial_state >= states {
            return Err(Error::config(
                "qucb.initial_state",
                format!("{initial_state} >= S = {states}"),
            ));
        }
        if !(bonus_scale > 0.0) {
            return Err(Error::config("qucb.c", "bonus constant must be positive"));
        }
        let h = horizon as f64;
        let mut v = vec![h; (horizon + 1) * states];
        v[horizon * states..].iter_mut().for_each(|x| *x = 0.0);
        Ok(Self {
            states,
            actions,
            horizon,
            initial_state,
            bonus_scale,
            log_term: conf.log_term_scaled((states * actions) as f64),
            q: vec![h; horizon * states * actions],
            n: vec![0; horizon * states * actions],
            v,
            episodes: 0,
        })
    }

    /// `rho(t) = sqrt(H^5 S A log / t) / H + H^3 S A log / (t H)`, capped at 1.
    pub fn rate(states: usize, actions: usize, horizon: usize, conf: Confidence) -> Result<RateFunction<f64>> {
        let h = horizon as f64;
        let sal = (states * actions) as f64 * conf.log_term_scaled((states * actions) as f64);
        RateFunction::new((h.powi(3) * sal).sqrt(), h * h * sal, 1.0, 0.5, conf.horizon)
    }

    fn idx(&self, h: usize, s: usize, a: usize) -> usize {
        (h * self.states + s) * self.actions + a
    }

    pub fn q(&self, h: usize, s: usize, a: usize) -> f64 {
        self.q[self.idx(h, s, a)]
    }

    pub fn v(&self, h: usize, s: usize) -> f64 {
        self.v[h * self.states + s]
    }

    pub fn visits(&self, h: usize, s: usize, a: usize) -> u64 {
        self.n[self.idx(h, s, a)]
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    fn greedy(&self, h: usize, s: usize) -> (usize, f64) {
        super::argmax_f64((0..self.actions).map(|a| self.q(h, s, a)))
    }
}

impl BaseAlgorithm for QUcb {
    type Obs = ();
    type Action = LayerPolicy;
    type Feedback = Episode;

    fn predict(&self) -> Prediction {
        Prediction::clamped(self.v(0, self.initial_state) / self.horizon as f64)
    }

    /// Greedy table for the coming episode. Updates at layer `h` only touch
    /// `Q_h`, so the greedy choice at later layers cannot change mid-episode.
    fn act(&self, _: &()) -> LayerPolicy {
        let mut table = Vec::with_capacity(self.horizon * self.states);
        for h in 0..self.horizon {
            for s in 0..self.states {
                table.push(self.greedy(h, s).0);
            }
        }
        LayerPolicy {
            horizon: self.horizon,
            states: self.states,
            table,
        }
    }

    fn update(&mut self, _: &(), _: &LayerPolicy, episode: &Episode) -> Result<StepSignal> {
        if episode.steps.len() != self.horizon {
            return Err(Error::FeedbackMismatch(format!(
                "episode has {} steps, expected H = {}",
                episode.steps.len(),
                self.horizon
            )));
        }
        let hf = self.horizon as f64;
        for (h, step) in episode.steps.iter().enumerate() {
            if step.state >= self.states || step.next_state >= self.states || step.action >= self.actions {
                return Err(Error::FeedbackMismatch(format!("step {h} indexes outside the MDP")));
            }
            let i = self.idx(h, step.state, step.action);
            self.n[i] += 1;
            let tau = self.n[i] as f64;
            let alpha = (hf + 1.0) / (hf + tau);
            let bonus = self.bonus_scale * (hf.powi(3) * self.log_term / tau).sqrt();
            let target = step.reward + self.v(h + 1, step.next_state) + bonus;
            self.q[i] = (1.0 - alpha) * self.q[i] + alpha * target;
            let best = self.greedy(h, step.state).1;
            self.v[h * self.states + step.state] = hf.min(best);
        }
        self.episodes += 1;
        Ok(StepSignal::Continue)
    }

    fn internal_time(&self) -> u64 {
        self.episodes
    }
}

impl Snapshot for QUcb {
    const KIND: &'static str = "q_ucb";
}
