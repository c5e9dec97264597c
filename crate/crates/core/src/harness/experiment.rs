use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::aggregate::{aggregate, AggregateReport, RunSummary};
use super::seed::RunStreams;
use super::svg::render_regret_svg;
use crate::base::{Confidence, GlmUcb, Link, Oful, QUcb, RateFunction, Ucb1};
use crate::env::{make_env, BanditWorld, EnvModel, EnvSpec, EpisodicWorld, MdpWorld, NonstatSummary};
use crate::error::{Error, Result};
use crate::inf_mdp::{borl, doubling_dbar, run_master_ucrl, Known, UcrlAcw};
use crate::master::{run_bare, run_master, RunLog, TestSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "master+ucb1")]
    MasterUcb1,
    #[serde(rename = "master+oful")]
    MasterOful,
    #[serde(rename = "master+glm")]
    MasterGlm,
    #[serde(rename = "master+qucb")]
    MasterQucb,
    #[serde(rename = "master-ucrl")]
    MasterUcrl,
    #[serde(rename = "doubling-dbar")]
    DoublingDbar,
    #[serde(rename = "borl")]
    Borl,
    #[serde(rename = "ucb1")]
    Ucb1,
    #[serde(rename = "oful")]
    Oful,
    #[serde(rename = "glm-ucb")]
    GlmUcb,
    #[serde(rename = "q-ucb")]
    QUcb,
    #[serde(rename = "ucrl-acw")]
    UcrlAcw,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::MasterUcb1 => "master+ucb1",
            Algorithm::MasterOful => "master+oful",
            Algorithm::MasterGlm => "master+glm",
            Algorithm::MasterQucb => "master+qucb",
            Algorithm::MasterUcrl => "master-ucrl",
            Algorithm::DoublingDbar => "doubling-dbar",
            Algorithm::Borl => "borl",
            Algorithm::Ucb1 => "ucb1",
            Algorithm::Oful => "oful",
            Algorithm::GlmUcb => "glm-ucb",
            Algorithm::QUcb => "q-ucb",
            Algorithm::UcrlAcw => "ucrl-acw",
        }
    }

    fn env_kinds(self) -> &'static [&'static str] {
        match self {
            Algorithm::MasterUcb1 | Algorithm::Ucb1 => &["mab"],
            Algorithm::MasterOful | Algorithm::Oful => &["linear"],
            Algorithm::MasterGlm | Algorithm::GlmUcb => &["linear", "glm"],
            Algorithm::MasterQucb | Algorithm::QUcb => &["episodic"],
            _ => &["infinite"],
        }
    }
}

/// Writes `inf` as the string `"inf"`; JSON has no infinity literal.
pub(crate) mod kappa_serde {
    use super::*;

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Number(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(k: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if k.is_finite() {
            s.serialize_f64(*k)
        } else {
            s.serialize_str("inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Number(x) => Ok(x),
            Raw::Text(t) => t
                .parse()
                .map_err(|_| serde::de::Error::custom(format!("kappa `{t}` is not a number"))),
        }
    }
}

fn default_kappa() -> f64 {
    1.0
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub env: EnvSpec,
    pub algorithm: Algorithm,
    /// Failure probability; `1/T` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default = "default_kappa", with = "kappa_serde")]
    pub kappa: f64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Diameter guess for `master-ucrl` and `ucrl-acw`; the largest segment
    /// diameter when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dbar: Option<f64>,
    /// Prior knowledge for `doubling-dbar`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub known: Option<Known>,
    /// Ridge parameter of GLM-UCB.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config("config", e.to_string()))
    }
}

/// A validated experiment: the environment is built once and shared
/// read-only by every run.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub spec: ExperimentSpec,
    pub env: EnvModel,
    pub conf: Confidence,
    pub summary: NonstatSummary,
}

impl Prepared {
    pub fn new(spec: ExperimentSpec) -> Result<Self> {
        let env = make_env(&spec.env)?;
        let horizon = env.horizon();
        let conf = match spec.delta {
            Some(d) => Confidence::new(horizon, d)?,
            None => Confidence::default_for(horizon),
        };
        let kind = env.kind();
        if !spec.algorithm.env_kinds().contains(&kind) {
            return Err(Error::config(
                "algorithm",
                format!("{} cannot run on a `{kind}` environment", spec.algorithm.name()),
            ));
        }
        if !(spec.kappa >= 0.0) {
            return Err(Error::config("kappa", format!("{} must be >= 0", spec.kappa)));
        }
        if spec.seeds.is_empty() {
            return Err(Error::config("seeds", "need at least one seed"));
        }
        let mut sorted = spec.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("seeds", "seeds must be distinct"));
        }
        if let Some(d) = spec.dbar {
            if !(d >= 1.0 && d.is_finite()) {
                return Err(Error::config("dbar", format!("{d} must be finite and >= 1")));
            }
        }
        if spec.algorithm == Algorithm::DoublingDbar && spec.known.is_none() {
            return Err(Error::config(
                "known",
                "doubling-dbar needs `known: {\"L\": n}` or `{\"delta\": x}`",
            ));
        }
        if let Some(l) = spec.lambda {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::config("lambda", format!("{l} must be positive")));
            }
        }
        let summary = env.nonstat_summary(conf)?;
        let prepared = Self {
            spec,
            env,
            conf,
            summary,
        };
        // surface learner-side parameter errors before any run starts
        prepared.run(prepared.spec.seeds[0], true)?;
        Ok(prepared)
    }

    fn dbar(&self) -> f64 {
        match (&self.env, self.spec.dbar) {
            (_, Some(d)) => d,
            (EnvModel::Infinite(tr), None) => tr.max_diameter().max(1.0),
            _ => 1.0,
        }
    }

    /// One seeded run; a dry run only constructs the learners.
    fn run(&self, seed: u64, dry: bool) -> Result<RunLog> {
        let mut streams = RunStreams::derive(self.spec.master_seed, seed);
        let conf = self.conf;
        let kappa = self.spec.kappa;
        let lambda = self.spec.lambda.unwrap_or(1.0);
        match (self.spec.algorithm, &self.env) {
            (alg @ (Algorithm::MasterUcb1 | Algorithm::Ucb1), EnvModel::Mab(m)) => {
                let arms = m.arms();
                let rate = Ucb1::rate(arms, conf)?;
                let mut world = BanditWorld::new(&self.env)?;
                let fresh = move || Ucb1::new(arms, Ucb1::DEFAULT_BONUS, conf);
                if dry {
                    fresh()?;
                    return Ok(RunLog::new(0));
                }
                if alg == Algorithm::Ucb1 {
                    run_bare(&mut world, fresh()?, &mut streams)
                } else {
                    run_master(
                        &mut world,
                        Box::new(fresh),
                        rate,
                        TestSettings::bandit(conf, kappa),
                        &mut streams,
                    )
                }
            }
            (alg @ (Algorithm::MasterOful | Algorithm::Oful), EnvModel::Linear(l)) => {
                let actions = l.actions.clone();
                let rate = Oful::rate(l.dim(), conf)?;
                let mut world = BanditWorld::new(&self.env)?;
                let fresh = move || Oful::new(&actions, conf);
                if dry {
                    fresh()?;
                    return Ok(RunLog::new(0));
                }
                if alg == Algorithm::Oful {
                    run_bare(&mut world, fresh()?, &mut streams)
                } else {
                    run_master(
                        &mut world,
                        Box::new(fresh),
                        rate,
                        TestSettings::bandit(conf, kappa),
                        &mut streams,
                    )
                }
            }
            (alg @ (Algorithm::MasterGlm | Algorithm::GlmUcb), EnvModel::Linear(l)) => {
                let actions = l.actions.clone();
                let link: Link = l.link;
                let rate = GlmUcb::rate(l.dim(), link, lambda, conf)?;
                let mut world = BanditWorld::new(&self.env)?;
                let fresh = move || GlmUcb::new(&actions, link, lambda, conf);
                if dry {
                    fresh()?;
                    return Ok(RunLog::new(0));
                }
                if alg == Algorithm::GlmUcb {
                    run_bare(&mut world, fresh()?, &mut streams)
                } else {
                    run_master(
                        &mut world,
                        Box::new(fresh),
                        rate,
                        TestSettings::bandit(conf, kappa),
                        &mut streams,
                    )
                }
            }
            (alg @ (Algorithm::MasterQucb | Algorithm::QUcb), EnvModel::Episodic(e)) => {
                let (s, a, h) = e.shape();
                let init = e.initial_state;
                let rate: RateFunction<f64> = QUcb::rate(s, a, h, conf)?;
                let mut world = EpisodicWorld::new(&self.env)?;
                let fresh = move || QUcb::new(s, a, h, init, QUcb::DEFAULT_BONUS, conf);
                if dry {
                    fresh()?;
                    return Ok(RunLog::new(0));
                }
                if alg == Algorithm::QUcb {
                    run_bare(&mut world, fresh()?, &mut streams)
                } else {
                    run_master(
                        &mut world,
                        Box::new(fresh),
                        rate,
                        TestSettings::bandit(conf, kappa),
                        &mut streams,
                    )
                }
            }
            (alg, EnvModel::Infinite(tr)) => {
                let mut world = MdpWorld::new(&self.env)?;
                let dbar = self.dbar();
                if dry {
                    UcrlAcw::new(tr.states(), tr.actions(), dbar, conf)?;
                    return Ok(RunLog::new(0));
                }
                match alg {
                    Algorithm::MasterUcrl => run_master_ucrl(&mut world, dbar, conf, kappa, &mut streams),
                    Algorithm::DoublingDbar => {
                        let known = self.spec.known.expect("validated");
                        doubling_dbar(&mut world, known, conf, kappa, &mut streams)
                    }
                    Algorithm::Borl => borl(&mut world, conf, kappa, &mut streams),
                    Algorithm::UcrlAcw => {
                        let base = UcrlAcw::new(tr.states(), tr.actions(), dbar, conf)?;
                        run_bare(&mut world, base, &mut streams)
                    }
                    _ => unreachable!("checked against env kinds"),
                }
            }
            _ => unreachable!("checked against env kinds"),
        }
    }

    pub fn run_seed(&self, seed: u64) -> Result<RunLog> {
        self.run(seed, false)
    }
}

/// Worker count from `NONSTAT_WORKERS`, else the available parallelism.
pub fn workers_from_env() -> Result<usize> {
    match std::env::var("NONSTAT_WORKERS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::config(
                "NONSTAT_WORKERS",
                format!("`{v}` is not a positive integer"),
            )),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub status: String,
    pub algorithm: String,
    pub runs: Vec<ManifestEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aggregate: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plot: Option<String>,
}

pub const AGGREGATE_FILE: &str = "aggregate.json";
pub const PLOT_FILE: &str = "regret.svg";
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn csv_name(seed: u64) -> String {
    format!("run_{seed}.csv")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Runs every seed, writing one CSV per seed, `aggregate.json`,
/// `regret.svg` and `manifest.json` into `out`. On a run failure the
/// manifest lists what completed and the first error is returned.
pub fn run_experiment(spec: &ExperimentSpec, out: &Path, workers: usize) -> Result<AggregateReport> {
    let prepared = Prepared::new(spec.clone())?;
    fs::create_dir_all(out)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::config("NONSTAT_WORKERS", e.to_string()))?;
    let results: Vec<(u64, Result<RunSummary>)> = pool.install(|| {
        spec.seeds
            .par_iter()
            .map(|&seed| {
                let res = prepared.run_seed(seed).and_then(|log| {
                    let file = fs::File::create(out.join(csv_name(seed)))?;
                    log.write_csv(std::io::BufWriter::new(file))?;
                    RunSummary::from_log(seed, &log)
                });
                (seed, res)
            })
            .collect()
    });

    let mut entries = Vec::new();
    let mut summaries = Vec::new();
    let mut first_error = None;
    for (seed, res) in results {
        match res {
            Ok(s) => {
                entries.push(ManifestEntry {
                    seed,
                    csv: Some(csv_name(seed)),
                    error: None,
                });
                summaries.push(s);
            }
            Err(e) => {
                entries.push(ManifestEntry {
                    seed,
                    csv: None,
                    error: Some(e.to_string()),
                });
                first_error.get_or_insert(e);
            }
        }
    }
    let mut manifest = Manifest {
        status: "failed".into(),
        algorithm: spec.algorithm.name().into(),
        runs: entries,
        aggregate: None,
        plot: None,
    };
    if let Some(e) = first_error {
        write_json(&out.join(MANIFEST_FILE), &manifest)?;
        return Err(e);
    }
    let report = aggregate(&prepared, &summaries)?;
    write_json(&out.join(AGGREGATE_FILE), &report)?;
    fs::write(out.join(PLOT_FILE), render_regret_svg(&report))?;
    manifest.status = "ok".into();
    manifest.aggregate = Some(AGGREGATE_FILE.into());
    manifest.plot = Some(PLOT_FILE.into());
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(report)
}
