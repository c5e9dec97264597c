//! Time-varying environments with exact oracles for `f*_t`, `Delta` and `L`.
//!
//! Environments are described by a JSON document whose `kind` selects one
//! of `mab`, `linear`, `glm`, `episodic` or `infinite`; see the README for
//! the schema. Construction validates every parameter and is deterministic.

use serde::{Deserialize, Serialize};

use crate::base::{Confidence, Link};
use crate::error::{Error, Result};
use crate::inf_mdp::TabularMdp;

pub mod bandit;
pub mod episodic;
pub mod infinite;
pub mod world;

pub use bandit::{bernoulli, LinearTrace, MabTrace, SegmentTrace};
pub use episodic::{EpisodicMdp, EpisodicMdpTrace};
pub use infinite::{InfiniteMdpTrace, InfiniteSegment};
pub use world::{BanditWorld, EpisodicWorld, MdpWorld, World};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftSpec {
    pub start: Vec<f64>,
    pub end: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeansSegment {
    pub length: usize,
    pub means: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub means_end: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaSegment {
    pub length: usize,
    pub theta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_end: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodicSegment {
    pub length: usize,
    #[serde(default)]
    pub random: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transitions: Option<Vec<Vec<Vec<Vec<f64>>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rewards: Option<Vec<Vec<Vec<f64>>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    RiverSwim,
    Swap,
    Cycle,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InfiniteSegmentSpec {
    pub length: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transitions: Option<Vec<Vec<Vec<f64>>>>,
    /// Replaces the preset's rewards when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rewards: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSpec {
    Mab {
        #[serde(rename = "T")]
        horizon: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        segments: Option<Vec<MeansSegment>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        drift: Option<DriftSpec>,
    },
    Linear {
        #[serde(rename = "T")]
        horizon: usize,
        #[serde(default)]
        seed: u64,
        actions: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        segments: Option<Vec<ThetaSegment>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        drift: Option<DriftSpec>,
    },
    Glm {
        #[serde(rename = "T")]
        horizon: usize,
        #[serde(default)]
        seed: u64,
        actions: Vec<Vec<f64>>,
        link: Link,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        segments: Option<Vec<ThetaSegment>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        drift: Option<DriftSpec>,
    },
    Episodic {
        #[serde(rename = "T")]
        horizon: usize,
        #[serde(default)]
        seed: u64,
        #[serde(rename = "S")]
        states: usize,
        #[serde(rename = "A")]
        actions: usize,
        #[serde(rename = "H")]
        layers: usize,
        #[serde(default)]
        initial_state: usize,
        segments: Vec<EpisodicSegment>,
    },
    Infinite {
        #[serde(rename = "T")]
        horizon: usize,
        #[serde(default)]
        seed: u64,
        #[serde(rename = "S")]
        states: usize,
        #[serde(rename = "A")]
        actions: usize,
        #[serde(default)]
        initial_state: usize,
        segments: Vec<InfiniteSegmentSpec>,
    },
}

impl EnvSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config("env", e.to_string()))
    }

    pub fn horizon(&self) -> usize {
        match self {
            EnvSpec::Mab { horizon, .. }
            | EnvSpec::Linear { horizon, .. }
            | EnvSpec::Glm { horizon, .. }
            | EnvSpec::Episodic { horizon, .. }
            | EnvSpec::Infinite { horizon, .. } => *horizon,
        }
    }
}

/// Ground-truth environment; immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EnvModel {
    Mab(MabTrace),
    Linear(LinearTrace),
    Episodic(EpisodicMdpTrace),
    Infinite(InfiniteMdpTrace),
}

/// Per-round non-stationarity `Delta(t)` matched to the environment's base
/// learner, its total `Delta` and the number of stationary pieces `L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonstatSummary {
    pub delta_trace: Vec<f64>,
    pub delta_total: f64,
    pub switch_count: usize,
}

impl NonstatSummary {
    fn from_trace(delta_trace: Vec<f64>) -> Self {
        let delta_total = delta_trace.iter().sum();
        let switch_count = 1 + delta_trace.iter().filter(|&&d| d != 0.0).count();
        Self {
            delta_trace,
            delta_total,
            switch_count,
        }
    }

    /// `Delta_[s, e] = sum_{tau = s}^{e - 1} Delta(tau)`.
    pub fn interval(&self, s: usize, e: usize) -> f64 {
        if e <= s {
            return 0.0;
        }
        self.delta_trace[s - 1..e - 1].iter().sum()
    }
}

/// `(length, start, end)` of each linearly interpolated piece.
type Pieces = Vec<(usize, Vec<f64>, Option<Vec<f64>>)>;

fn vector_trace(segments: Option<Pieces>, drift: Option<DriftSpec>, horizon: usize) -> Result<SegmentTrace> {
    match (segments, drift) {
        (Some(_), Some(_)) => Err(Error::config("env", "give either `segments` or `drift`, not both")),
        (None, None) => Err(Error::config("env", "one of `segments` or `drift` is required")),
        (Some(s), None) => SegmentTrace::new(s, horizon, "env.segments"),
        (None, Some(d)) => {
            if d.start.len() != d.end.len() {
                return Err(Error::config("env.drift.end", "dimension differs from `start`"));
            }
            SegmentTrace::new(vec![(horizon, d.start, Some(d.end))], horizon, "env.drift")
        }
    }
}

fn preset_mdp(preset: Preset, states: usize, actions: usize, seed: u64, field: &str) -> Result<TabularMdp<f64>> {
    match preset {
        Preset::Swap => {
            if states != 2 {
                return Err(Error::config(field, "the swap preset needs S = 2"));
            }
            Ok(TabularMdp::swap_with(actions))
        }
        Preset::Cycle => {
            if states < 2 {
                return Err(Error::config(field, "the cycle preset needs S >= 2"));
            }
            Ok(TabularMdp::cycle(states, actions))
        }
        Preset::RiverSwim => {
            if actions != 2 || states < 2 {
                return Err(Error::config(field, "the river_swim preset needs A = 2 and S >= 2"));
            }
            Ok(TabularMdp::river_swim(states))
        }
        Preset::Random => Ok(TabularMdp::random(states, actions, seed)),
    }
}

/// Segment seeds are spread with a SplitMix64 step so neighbouring segments
/// of a random environment are unrelated.
fn segment_seed(seed: u64, i: usize) -> u64 {
    let mut z = seed.wrapping_add((i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn flatten_rewards(rewards: &[Vec<f64>], states: usize, actions: usize, field: &str) -> Result<Vec<f64>> {
    if rewards.len() != states || rewards.iter().any(|r| r.len() != actions) {
        return Err(Error::config(field, format!("expected a {states} x {actions} table")));
    }
    Ok(rewards.concat())
}

/// A single stationary MDP, as read by the diameter tool: either a preset
/// with `S`, `A` (and `seed` for `random`), or explicit tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpFile {
    #[serde(rename = "S", default, skip_serializing_if = "Option::is_none")]
    pub states: Option<usize>,
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    pub actions: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transitions: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rewards: Option<Vec<Vec<f64>>>,
}

pub fn load_mdp(text: &str) -> Result<TabularMdp<f64>> {
    let file: MdpFile = serde_json::from_str(text).map_err(|e| Error::config("mdp", e.to_string()))?;
    match (file.preset, file.transitions, file.rewards) {
        (Some(p), None, None) => {
            let s = file.states.ok_or_else(|| Error::config("mdp.S", "presets need S"))?;
            let a = file.actions.ok_or_else(|| Error::config("mdp.A", "presets need A"))?;
            preset_mdp(p, s, a, file.seed, "mdp.preset")
        }
        (None, Some(p), Some(r)) => TabularMdp::from_tables(&p, &r).map_err(|e| Error::config("mdp", e.to_string())),
        _ => Err(Error::config(
            "mdp",
            "give either `preset` with `S` and `A`, or `transitions` and `rewards`",
        )),
    }
}

impl EnvModel {
    pub fn from_json(text: &str) -> Result<Self> {
        make_env(&EnvSpec::from_json(text)?)
    }

    pub fn horizon(&self) -> usize {
        match self {
            EnvModel::Mab(m) => m.horizon(),
            EnvModel::Linear(l) => l.horizon(),
            EnvModel::Episodic(e) => e.horizon,
            EnvModel::Infinite(i) => i.horizon,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            EnvModel::Mab(_) => "mab",
            EnvModel::Linear(l) if l.link == Link::Identity => "linear",
            EnvModel::Linear(_) => "glm",
            EnvModel::Episodic(_) => "episodic",
            EnvModel::Infinite(_) => "infinite",
        }
    }

    /// `f*_t`, exact.
    pub fn optimal_value(&self, t: usize) -> Result<f64> {
        match self {
            EnvModel::Mab(m) => m.optimal_value(t),
            EnvModel::Linear(l) => l.optimal_value(t),
            EnvModel::Episodic(e) => e.optimal_value(t),
            EnvModel::Infinite(i) => i.optimal_value(t),
        }
    }

    /// Per-round `Delta(t)` in the form matched to each setting's learner:
    /// `||r_t - r_{t+1}||_inf` for bandits, `(k^2 d / c) sqrt(log(T/delta)) ||theta_t - theta_{t+1}||`
    /// for (generalised) linear bandits, the `1/H`-scaled layer drift for
    /// episodic MDPs and `Delta^r + 2 D_max Delta^p + Delta^J` for average-reward MDPs.
    pub fn nonstat_summary(&self, conf: Confidence) -> Result<NonstatSummary> {
        let horizon = self.horizon();
        let mut trace = vec![0.0; horizon];
        match self {
            EnvModel::Mab(m) => {
                for t in m.means.change_rounds() {
                    trace[t - 1] = m.drift(t)?;
                }
            }
            EnvModel::Linear(l) => {
                let (k, c) = (l.link.k_mu(), l.link.c_mu());
                let scale = k * k * l.dim() as f64 / c * conf.log_term().sqrt();
                for t in l.theta.change_rounds() {
                    trace[t - 1] = scale * l.theta_shift(t)?;
                }
            }
            EnvModel::Episodic(e) => {
                for &(start, _, _) in &e.segments[1..] {
                    trace[start - 2] = e.drift(start - 1)?;
                }
            }
            EnvModel::Infinite(i) => {
                let dbar = i.max_diameter();
                for s in &i.segments[1..] {
                    trace[s.start - 2] = i.drift(s.start - 1, dbar)?;
                }
            }
        }
        Ok(NonstatSummary::from_trace(trace))
    }
}

/// Builds and validates an environment. Equal specs give equal models.
pub fn make_env(spec: &EnvSpec) -> Result<EnvModel> {
    if spec.horizon() == 0 {
        return Err(Error::config("env.T", "horizon must be positive"));
    }
    match spec.clone() {
        EnvSpec::Mab {
            horizon,
            segments,
            drift,
            ..
        } => {
            let pieces = segments.map(|v| v.into_iter().map(|s| (s.length, s.means, s.means_end)).collect());
            Ok(EnvModel::Mab(MabTrace::new(vector_trace(pieces, drift, horizon)?)?))
        }
        EnvSpec::Linear {
            horizon,
            actions,
            segments,
            drift,
            ..
        } => {
            let pieces = segments.map(|v| v.into_iter().map(|s| (s.length, s.theta, s.theta_end)).collect());
            let theta = vector_trace(pieces, drift, horizon)?;
            Ok(EnvModel::Linear(LinearTrace::new(actions, Link::Identity, theta)?))
        }
        EnvSpec::Glm {
            horizon,
            actions,
            link,
            segments,
            drift,
            ..
        } => {
            let pieces = segments.map(|v| v.into_iter().map(|s| (s.length, s.theta, s.theta_end)).collect());
            let theta = vector_trace(pieces, drift, horizon)?;
            Ok(EnvModel::Linear(LinearTrace::new(actions, link, theta)?))
        }
        EnvSpec::Episodic {
            horizon,
            seed,
            states,
            actions,
            layers,
            initial_state,
            segments,
        } => {
            let mut pieces = Vec::with_capacity(segments.len());
            for (i, seg) in segments.into_iter().enumerate() {
                let field = format!("env.segments[{i}]");
                let mdp = match (seg.random, seg.transitions, seg.rewards) {
                    (true, None, None) => EpisodicMdp::random(states, actions, layers, segment_seed(seed, i)),
                    (false, Some(p), Some(r)) => EpisodicMdp::from_tables(&p, &r, &field)?,
                    _ => {
                        return Err(Error::config(
                            field,
                            "give either `random: true` or both `transitions` and `rewards`",
                        ))
                    }
                };
                if (mdp.states, mdp.actions, mdp.layers) != (states, actions, layers) {
                    return Err(Error::config(field, "tables do not match S, A, H"));
                }
                pieces.push((seg.length, mdp));
            }
            Ok(EnvModel::Episodic(EpisodicMdpTrace::new(
                pieces,
                horizon,
                initial_state,
            )?))
        }
        EnvSpec::Infinite {
            horizon,
            seed,
            states,
            actions,
            initial_state,
            segments,
        } => {
            if states == 0 || actions == 0 {
                return Err(Error::config("env", "S and A must be positive"));
            }
            let mut pieces = Vec::with_capacity(segments.len());
            for (i, seg) in segments.into_iter().enumerate() {
                let field = format!("env.segments[{i}]");
                let mut mdp = match (seg.preset, seg.transitions) {
                    (Some(p), None) => preset_mdp(p, states, actions, segment_seed(seed, i), &field)?,
                    (None, Some(p)) => {
                        let r = seg.rewards.clone().ok_or_else(|| {
                            Error::config(format!("{field}.rewards"), "explicit transitions need rewards")
                        })?;
                        TabularMdp::from_tables(&p, &r).map_err(|e| Error::config(field.clone(), e.to_string()))?
                    }
                    _ => return Err(Error::config(field, "give exactly one of `preset` or `transitions`")),
                };
                if (mdp.states, mdp.actions) != (states, actions) {
                    return Err(Error::config(field, "tables do not match S, A"));
                }
                if let Some(r) = &seg.rewards {
                    let flat = flatten_rewards(r, states, actions, &format!("{field}.rewards"))?;
                    mdp = TabularMdp::new(states, actions, mdp.transitions, flat)
                        .map_err(|e| Error::config(format!("{field}.rewards"), e.to_string()))?;
                }
                pieces.push((seg.length, mdp));
            }
            Ok(EnvModel::Infinite(InfiniteMdpTrace::new(
                pieces,
                horizon,
                initial_state,
            )?))
        }
    }
}
