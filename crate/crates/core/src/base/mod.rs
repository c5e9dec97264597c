//! The base-learner contract and the four optimistic learners.
//!
//! A base learner emits an optimistic estimate `f~_t in [0, 1]` of the best
//! achievable reward, commits to a decision, and is updated with the
//! environment's feedback. It only ever sees the rounds on which it is
//! active: its internal clock advances on `update` and nowhere else.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub mod glm;
pub mod oful;
pub mod qucb;
pub mod rate;
pub mod ucb1;

pub use glm::{GlmUcb, Link};
pub use oful::Oful;
pub use qucb::{Episode, EpisodeStep, LayerPolicy, QUcb};
pub use rate::RateFunction;
pub use ucb1::Ucb1;

/// Index into a finite policy set (an arm, or an action of a fixed action set).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PolicyIndex(pub usize);

/// Optimistic estimate clamped to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Prediction(f64);

impl Prediction {
    pub fn clamped(raw: f64) -> Self {
        // NaN only arises from an empty index set, treat it as fully optimistic
        Prediction(if raw.is_nan() { 1.0 } else { raw.clamp(0.0, 1.0) })
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Horizon and failure probability shared by every confidence radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Confidence {
    pub horizon: usize,
    pub delta: f64,
}

impl Confidence {
    pub fn new(horizon: usize, delta: f64) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::config("T", "horizon must be positive"));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::config("delta", format!("{delta} must lie in (0, 1)")));
        }
        Ok(Self { horizon, delta })
    }

    /// `delta = 1 / T`.
    pub fn default_for(horizon: usize) -> Self {
        let horizon = horizon.max(2);
        Self {
            horizon,
            delta: 1.0 / horizon as f64,
        }
    }

    /// `log(T / delta)`.
    pub fn log_term(&self) -> f64 {
        (self.horizon as f64 / self.delta).ln()
    }

    /// `log(scale * T / delta)`.
    pub fn log_term_scaled(&self, scale: f64) -> f64 {
        (scale * self.horizon as f64 / self.delta).ln()
    }
}

/// Whether the learner wants to keep going after an update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepSignal {
    Continue,
    /// The learner detected that it can no longer certify its guarantees.
    Terminate,
}

/// Anything carrying the scalar reward `R_t in [0, 1]` of a round.
pub trait Reward {
    fn reward(&self) -> f64;
}

impl Reward for f64 {
    fn reward(&self) -> f64 {
        *self
    }
}

/// Short label for a decision, used in run logs.
pub trait PolicyLabel {
    fn label(&self) -> String;
}

impl PolicyLabel for PolicyIndex {
    fn label(&self) -> String {
        self.0.to_string()
    }
}

/// Per-round diagnostics exposed by the average-reward learner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnerDiagnostics {
    pub episode: u64,
    pub eta: f64,
    pub gamma: f64,
    pub dbar: f64,
}

pub trait BaseAlgorithm {
    /// What the learner sees before deciding (the current MDP state, or nothing).
    type Obs;
    type Action: Clone + PolicyLabel;
    type Feedback: Reward;

    fn predict(&self) -> Prediction;

    fn act(&self, obs: &Self::Obs) -> Self::Action;

    fn update(&mut self, obs: &Self::Obs, action: &Self::Action, feedback: &Self::Feedback) -> Result<StepSignal>;

    /// Number of updates received so far.
    fn internal_time(&self) -> u64;

    fn diagnostics(&self) -> Option<LearnerDiagnostics> {
        None
    }
}

const SNAPSHOT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct SnapshotEnvelope<S> {
    version: u32,
    kind: String,
    state: S,
}

/// Versioned JSON snapshots of a learner's full state.
///
/// The envelope is `{"version": 1, "kind": <KIND>, "state": {...}}`; floats
/// are written in shortest round-trip form and parsed back exactly.
pub trait Snapshot: Serialize + DeserializeOwned {
    const KIND: &'static str;

    fn to_snapshot(&self) -> Result<String> {
        Ok(serde_json::to_string(&SnapshotEnvelope {
            version: SNAPSHOT_VERSION,
            kind: Self::KIND.to_string(),
            state: self,
        })?)
    }

    fn from_snapshot(text: &str) -> Result<Self> {
        let env: SnapshotEnvelope<Self> = serde_json::from_str(text)?;
        if env.version != SNAPSHOT_VERSION {
            return Err(Error::Snapshot(format!("unsupported version {}", env.version)));
        }
        if env.kind != Self::KIND {
            return Err(Error::Snapshot(format!(
                "snapshot holds `{}`, expected `{}`",
                env.kind,
                Self::KIND
            )));
        }
        Ok(env.state)
    }
}

/// Index of the largest score with ties going to the lowest index.
pub(crate) fn argmax_f64(scores: impl IntoIterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, s) in scores.into_iter().enumerate() {
        if s > best.1 {
            best = (i, s);
        }
    }
    best
}
