use serde::{Deserialize, Serialize};

use crate::base::{
    BaseAlgorithm, Confidence, LearnerDiagnostics, PolicyIndex, Prediction, RateFunction, Reward, Snapshot, StepSignal,
};
use crate::error::{Error, Result};

use super::evi::{evi, ConfidenceSets, EviOutput};

/// One observed step of an average-reward MDP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
}

impl Reward for Transition {
    fn reward(&self) -> f64 {
        self.reward
    }
}

/// `rho(t) = min{D S sqrt(A log(SAT/delta) / t) + D S A log(SAT/delta) / t, D}`.
pub fn rho_ucrl(states: usize, actions: usize, dbar: f64, conf: Confidence) -> Result<RateFunction<f64>> {
    let (s, a) = (states as f64, actions as f64);
    let log = conf.log_term_scaled(s * a);
    RateFunction::new(
        dbar * s * (a * log).sqrt(),
        dbar * s * a * log,
        dbar.max(1.0),
        0.5,
        conf.horizon,
    )
}

/// Runs EVI on `sets` widened by `eta = eta0, 2 eta0, 4 eta0, ...` until the
/// bias span is at most `2 dbar`, returning the solution and the final `eta`.
///
/// Once every ball covers the whole simplex the span is at most
/// `1 + epsilon`, so the loop always stops before `eta` passes 2 plus `eta0`.
pub fn widen_to_span(sets: &ConfidenceSets<f64>, dbar: f64, eta0: f64, epsilon: f64) -> Result<(EviOutput<f64>, f64)> {
    let mut eta = eta0;
    loop {
        let out = evi(&sets.widened(eta), epsilon)?;
        if out.bias_span() <= 2.0 * dbar {
            return Ok((out, eta));
        }
        if eta > 4.0 {
            return Err(Error::NonConvergence {
                solver: "confidence widening",
                iterations: (eta / eta0).log2() as usize,
                residual: out.bias_span(),
            });
        }
        eta *= 2.0;
    }
}

/// UCRL with adaptive confidence widening and early termination for a guess
/// `dbar` of the maximal diameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UcrlAcw {
    states: usize,
    actions: usize,
    horizon: usize,
    dbar: f64,
    log_term: f64,
    /// all-time counts `n(s, a, s')`, `n(s, a)` and reward sums
    transitions: Vec<u64>,
    visits: Vec<u64>,
    reward_sums: Vec<f64>,
    /// `N_k(s, a)` frozen at the start of the episode
    episode_start: Vec<u64>,
    nu: Vec<u64>,
    policy: Vec<usize>,
    bias: Vec<f64>,
    gain: f64,
    eta: f64,
    gamma: f64,
    episode: u64,
    steps: u64,
}

impl UcrlAcw {
    pub fn new(states: usize, actions: usize, dbar: f64, conf: Confidence) -> Result<Self> {
        if states == 0 || actions == 0 {
            return Err(Error::config("ucrl", "S and A must be positive"));
        }
        if !(dbar >= 1.0) || !dbar.is_finite() {
            return Err(Error::config("ucrl.dbar", format!("{dbar} must be finite and >= 1")));
        }
        let sa = states * actions;
        let mut alg = Self {
            states,
            actions,
            horizon: conf.horizon,
            dbar,
            log_term: conf.log_term_scaled(sa as f64),
            transitions: vec![0; sa * states],
            visits: vec![0; sa],
            reward_sums: vec![0.0; sa],
            episode_start: vec![0; sa],
            nu: vec![0; sa],
            policy: vec![0; states],
            bias: vec![0.0; states],
            gain: 1.0,
            eta: 0.0,
            gamma: 0.0,
            episode: 0,
            steps: 0,
        };
        alg.start_episode()?;
        Ok(alg)
    }

    /// `conf(s, a) = 8 sqrt(log(SAT/delta) / N+(s, a))` with `N` frozen at episode start.
    pub fn conf(&self, s: usize, a: usize) -> f64 {
        let n = self.episode_start[s * self.actions + a].max(1) as f64;
        8.0 * (self.log_term / n).sqrt()
    }

    /// Unwidened confidence sets of the current episode. Unvisited pairs get
    /// the uniform centre; their radius already spans the whole simplex.
    pub fn confidence_sets(&self) -> ConfidenceSets<f64> {
        let (ns, na) = (self.states, self.actions);
        let mut centre = vec![0.0; ns * na * ns];
        let mut radius = vec![0.0; ns * na];
        let mut reward_upper = vec![0.0; ns * na];
        let root_s = (ns as f64).sqrt();
        for i in 0..ns * na {
            let n = self.visits[i];
            let row = &mut centre[i * ns..(i + 1) * ns];
            let (s, a) = (i / na, i % na);
            let c = self.conf(s, a);
            if n == 0 {
                row.iter_mut().for_each(|p| *p = 1.0 / ns as f64);
                radius[i] = (root_s * c).max(2.0);
                reward_upper[i] = 1.0;
            } else {
                let nf = n as f64;
                for (p, &cnt) in row.iter_mut().zip(&self.transitions[i * ns..(i + 1) * ns]) {
                    *p = cnt as f64 / nf;
                }
                radius[i] = root_s * c;
                reward_upper[i] = (self.reward_sums[i] / nf + c).min(1.0);
            }
        }
        ConfidenceSets {
            states: ns,
            actions: na,
            centre,
            radius,
            reward_upper,
        }
    }

    fn start_episode(&mut self) -> Result<()> {
        self.episode_start.copy_from_slice(&self.visits);
        self.nu.iter_mut().for_each(|x| *x = 0);
        let t = (self.steps + 1) as f64;
        let sets = self.confidence_sets();
        let (out, eta) = widen_to_span(&sets, self.dbar, 1.0 / self.horizon as f64, (1.0 / t).sqrt())?;
        debug_assert!(out.bias_span() <= 2.0 * self.dbar);
        self.policy = out.policy;
        self.bias = out.bias;
        self.gain = out.gain;
        self.eta = eta;
        self.episode += 1;
        Ok(())
    }

    /// `4 S sqrt(A t log(SAT/delta))`.
    pub fn gamma_threshold(&self, t: u64) -> f64 {
        4.0 * self.states as f64 * (self.actions as f64 * t as f64 * self.log_term).sqrt()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn episode(&self) -> u64 {
        self.episode
    }

    pub fn dbar(&self) -> f64 {
        self.dbar
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn policy(&self) -> &[usize] {
        &self.policy
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }
}

impl BaseAlgorithm for UcrlAcw {
    type Obs = usize;
    type Action = PolicyIndex;
    type Feedback = Transition;

    fn predict(&self) -> Prediction {
        Prediction::clamped(self.gain)
    }

    fn act(&self, state: &usize) -> PolicyIndex {
        PolicyIndex(self.policy[*state])
    }

    fn update(&mut self, state: &usize, action: &PolicyIndex, fb: &Transition) -> Result<StepSignal> {
        if fb.state != *state || fb.action != action.0 {
            return Err(Error::FeedbackMismatch(format!(
                "transition from ({}, {}) reported for ({}, {})",
                fb.state, fb.action, state, action.0
            )));
        }
        if fb.state >= self.states || fb.next_state >= self.states || fb.action >= self.actions {
            return Err(Error::FeedbackMismatch("transition indexes outside the MDP".into()));
        }
        let i = fb.state * self.actions + fb.action;
        self.steps += 1;
        self.nu[i] += 1;
        self.gamma += self.eta;
        self.visits[i] += 1;
        self.transitions[i * self.states + fb.next_state] += 1;
        self.reward_sums[i] += fb.reward;
        if self.gamma > self.gamma_threshold(self.steps) {
            return Ok(StepSignal::Terminate);
        }
        if self.nu[i] >= self.episode_start[i].max(1) {
            self.start_episode()?;
        }
        Ok(StepSignal::Continue)
    }

    fn internal_time(&self) -> u64 {
        self.steps
    }

    fn diagnostics(&self) -> Option<LearnerDiagnostics> {
        Some(LearnerDiagnostics {
            episode: self.episode,
            eta: self.eta,
            gamma: self.gamma,
            dbar: self.dbar,
        })
    }
}

impl Snapshot for UcrlAcw {
    const KIND: &'static str = "ucrl_acw";
}
