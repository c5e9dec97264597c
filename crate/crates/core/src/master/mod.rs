//! MASTER: doubling blocks of MALG with two stationarity tests and restarts.
//!
//! Block `n` runs a fresh MALG for at most `2^n` rounds. After every round
//! the running minimum `U_t` of the emitted estimates is updated, Test 1 is
//! checked for each instance that ended on this round and Test 2 for the
//! block so far. Any failure erases all learner state and the next round
//! opens a block of order 0 in a new epoch.

use serde::{Deserialize, Serialize};

use crate::base::{BaseAlgorithm, Confidence, LearnerDiagnostics, PolicyLabel, RateFunction, Reward, StepSignal};
use crate::env::World;
use crate::error::Result;
use crate::harness::RunStreams;
use crate::malg::{rho_hat, Malg};

mod log;

pub use log::{MdpColumns, RestartCause, RestartEvent, RoundRecord, RunLog};

/// Multiplier of `rho_hat` for bandit-style base learners.
pub const BANDIT_MULT: f64 = 6.0;
/// Multiplier of `rho_hat` for the average-reward learner.
pub const MDP_MULT: f64 = 18.0;

/// Threshold scale shared by both tests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestSettings {
    pub conf: Confidence,
    /// `1` keeps the thresholds as derived, `inf` disables the tests.
    pub kappa: f64,
    pub mult: f64,
}

impl TestSettings {
    pub fn bandit(conf: Confidence, kappa: f64) -> Self {
        Self {
            conf,
            kappa,
            mult: BANDIT_MULT,
        }
    }

    pub fn mdp(conf: Confidence, kappa: f64) -> Self {
        Self {
            conf,
            kappa,
            mult: MDP_MULT,
        }
    }

    pub fn rho_hat(&self, t: usize, rate: &RateFunction<f64>) -> f64 {
        rho_hat(t, rate, self.conf, self.kappa, self.mult)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestOutcome {
    Pass,
    Fail,
}

/// Bookkeeping of the live block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockState {
    pub start: usize,
    pub n: u32,
    pub u_min: f64,
    /// `sum (g~_tau - R_tau)` over the block.
    pub test2_sum: f64,
    pub reward_sum: f64,
}

impl BlockState {
    pub fn new(start: usize, n: u32) -> Self {
        Self {
            start,
            n,
            u_min: f64::INFINITY,
            test2_sum: 0.0,
            reward_sum: 0.0,
        }
    }

    pub fn record(&mut self, g_tilde: f64, reward: f64) {
        self.u_min = self.u_min.min(g_tilde);
        self.test2_sum += g_tilde - reward;
        self.reward_sum += reward;
    }

    pub fn len(&self, t: usize) -> usize {
        t - self.start + 1
    }

    pub fn end(&self) -> usize {
        self.start + (1usize << self.n) - 1
    }
}

/// Test 1 for an order-`m` instance ending now: fails iff its mean interval
/// reward reaches `U_t + 9 rho_hat(2^m)`.
pub fn test1(
    reward_interval_sum: f64,
    order: u32,
    u_min: f64,
    rate: &RateFunction<f64>,
    tests: &TestSettings,
) -> TestOutcome {
    let len = 1usize << order;
    if reward_interval_sum / len as f64 >= u_min + 9.0 * tests.rho_hat(len, rate) {
        TestOutcome::Fail
    } else {
        TestOutcome::Pass
    }
}

/// Test 2: fails iff the block's average optimism gap reaches `3 rho_hat(len)`.
pub fn test2(block: &BlockState, t: usize, rate: &RateFunction<f64>, tests: &TestSettings) -> TestOutcome {
    let len = block.len(t);
    if block.test2_sum / len as f64 >= 3.0 * tests.rho_hat(len, rate) {
        TestOutcome::Fail
    } else {
        TestOutcome::Pass
    }
}

pub type Factory<B> = Box<dyn Fn() -> Result<B> + Send + Sync>;

/// MASTER as a round-by-round state machine.
pub struct Master<B: BaseAlgorithm> {
    factory: Factory<B>,
    rate: RateFunction<f64>,
    tests: TestSettings,
    live: Option<(BlockState, Malg<B>)>,
    next_order: u32,
    epoch: u64,
    epochs_started: u64,
}

/// Outcome of one MASTER round.
#[derive(Debug, Clone, PartialEq)]
pub struct MasterRound {
    pub record: RoundRecord,
    pub restart: Option<RestartEvent>,
    pub diagnostics: Option<LearnerDiagnostics>,
}

impl<B: BaseAlgorithm> Master<B> {
    pub fn new(factory: Factory<B>, rate: RateFunction<f64>, tests: TestSettings) -> Self {
        Self::starting_at_epoch(factory, rate, tests, 0)
    }

    /// Fresh state whose first epoch carries the id `epoch` in the log.
    pub fn starting_at_epoch(factory: Factory<B>, rate: RateFunction<f64>, tests: TestSettings, epoch: u64) -> Self {
        Self {
            factory,
            rate,
            tests,
            live: None,
            next_order: 0,
            epoch,
            epochs_started: 1,
        }
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    /// Epochs begun by this instance, counting the current one.
    pub fn epochs_started(&self) -> u64 {
        self.epochs_started
    }

    pub fn block(&self) -> Option<&BlockState> {
        self.live.as_ref().map(|(b, _)| b)
    }

    pub fn step<W>(&mut self, t: usize, world: &mut W, streams: &mut RunStreams) -> Result<MasterRound>
    where
        W: World<Obs = B::Obs, Action = B::Action, Feedback = B::Feedback>,
    {
        let mut events = Vec::new();
        if self.live.as_ref().is_none_or(|(b, _)| t > b.end()) {
            let n = self.next_order;
            self.next_order += 1;
            events.push(format!("block:{n}"));
            self.live = Some((BlockState::new(t, n), Malg::new(n, t, &self.rate)));
        }
        let (block, malg) = self.live.as_mut().expect("block opened above");
        let obs = world.observe();
        let out = malg.begin_round(t, &obs, &*self.factory, &mut streams.schedule, &mut events)?;
        let feedback = world.step(t, &out.action, &mut streams.env)?;
        let reward = feedback.reward();
        let outcome = malg.finish_round(t, &obs, &out.action, &feedback, &mut events)?;
        let diagnostics = outcome.diagnostics;
        block.record(out.g_tilde, reward);

        let mut cause = None;
        for ended in &outcome.ended {
            if test1(
                ended.reward_interval_sum,
                ended.order,
                block.u_min,
                &self.rate,
                &self.tests,
            ) == TestOutcome::Fail
            {
                cause = Some(RestartCause::Test1 {
                    order: ended.order,
                    instance: ended.id,
                });
                break;
            }
        }
        if cause.is_none() && test2(block, t, &self.rate, &self.tests) == TestOutcome::Fail {
            cause = Some(RestartCause::Test2);
        }
        if cause.is_none() && outcome.signal == StepSignal::Terminate {
            cause = Some(RestartCause::MdpSignal);
        }

        let record = RoundRecord {
            t,
            block: block.n,
            epoch: self.epoch,
            active_order: out.active_order,
            policy: out.action.label(),
            reward,
            f_star: world.optimal_value(t)?,
            g_tilde: out.g_tilde,
            u_min: block.u_min,
            event: String::new(),
            mdp: diagnostics.map(|d| MdpColumns {
                episode: d.episode,
                eta: d.eta,
                gamma_budget: d.gamma,
                dbar: d.dbar,
                borl_arm: None,
            }),
        };
        let restart = cause.map(|cause| RestartEvent {
            t,
            cause,
            block: block.n,
            epoch: self.epoch,
        });
        if let Some(r) = &restart {
            events.push(format!("restart:{}", r.cause.label()));
            self.live = None;
            self.next_order = 0;
            self.epoch += 1;
            self.epochs_started += 1;
        }
        Ok(MasterRound {
            record: RoundRecord {
                event: events.join(";"),
                ..record
            },
            restart,
            diagnostics,
        })
    }
}

/// Runs MASTER over the world's whole horizon.
pub fn run_master<B, W>(
    world: &mut W,
    factory: Factory<B>,
    rate: RateFunction<f64>,
    tests: TestSettings,
    streams: &mut RunStreams,
) -> Result<RunLog>
where
    B: BaseAlgorithm,
    W: World<Obs = B::Obs, Action = B::Action, Feedback = B::Feedback>,
{
    let mut master = Master::new(factory, rate, tests);
    let mut log = RunLog::new(world.horizon());
    for t in 1..=world.horizon() {
        let round = master.step(t, world, streams)?;
        log.restarts.extend(round.restart);
        log.rounds.push(round.record);
    }
    Ok(log)
}

/// The base learner alone, with no scheduling, tests or restarts.
///
/// A termination signal from the learner is ignored.
pub fn run_bare<B, W>(world: &mut W, mut base: B, streams: &mut RunStreams) -> Result<RunLog>
where
    B: BaseAlgorithm,
    W: World<Obs = B::Obs, Action = B::Action, Feedback = B::Feedback>,
{
    let mut log = RunLog::new(world.horizon());
    let mut u_min = f64::INFINITY;
    for t in 1..=world.horizon() {
        let obs = world.observe();
        let g = base.predict().value();
        let action = base.act(&obs);
        let feedback = world.step(t, &action, &mut streams.env)?;
        base.update(&obs, &action, &feedback)?;
        u_min = u_min.min(g);
        log.rounds.push(RoundRecord {
            t,
            block: 0,
            epoch: 0,
            active_order: 0,
            policy: action.label(),
            reward: feedback.reward(),
            f_star: world.optimal_value(t)?,
            g_tilde: g,
            u_min,
            event: String::new(),
            mdp: base.diagnostics().map(|d| MdpColumns {
                episode: d.episode,
                eta: d.eta,
                gamma_budget: d.gamma,
                dbar: d.dbar,
                borl_arm: None,
            }),
        });
    }
    Ok(log)
}
