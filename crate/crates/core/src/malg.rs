//! Randomized multi-scale scheduling of base-algorithm instances inside one
//! block of length `2^n`.
//!
//! Instances of order `m` occupy aligned slots of `2^m` rounds. At the start
//! of each slot an order-`m` instance is spawned with probability
//! `q_m = rho(2^n) / rho(2^m)`; the order-`n` instance always exists. On
//! every round the covering instance of smallest order is active and the
//! others are paused with their state untouched.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::base::{BaseAlgorithm, Confidence, LearnerDiagnostics, RateFunction, Reward, StepSignal};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `rho(2^n) / rho(2^m)`.
pub fn spawn_probability<F: Scalar>(n: u32, m: u32, rate: &RateFunction<F>) -> Result<F> {
    if m > n {
        return Err(Error::OrderOutOfRange { m, n });
    }
    if m == n {
        return Ok(F::one());
    }
    Ok((rate.rho(1 << n) / rate.rho(1 << m)).min(F::one()))
}

/// Spawn table `q_0..=q_n`.
pub fn spawn_table<F: Scalar>(n: u32, rate: &RateFunction<F>) -> Vec<F> {
    (0..=n)
        .map(|m| spawn_probability(n, m, rate).expect("m <= n"))
        .collect()
}

/// Orders spawned at round `t` of a block starting at `block_start`, in the
/// order `m = n..0` they are drawn.
///
/// Each eligible order with `q_m < 1` consumes exactly one uniform draw, so
/// the stream usage depends only on the schedule outcome.
pub fn maybe_spawn<R: Rng + ?Sized>(t: usize, block_start: usize, probs: &[f64], rng: &mut R) -> Vec<u32> {
    let offset = t - block_start;
    let mut out = Vec::new();
    for m in (0..probs.len() as u32).rev() {
        if !offset.is_multiple_of(1usize << m) {
            continue;
        }
        let q = probs[m as usize];
        if q >= 1.0 || rng.gen::<f64>() < q {
            out.push(m);
        }
    }
    out
}

/// `kappa * mult * n_hat * log(T/delta) * rho(t)` with `n_hat = log2(T) + 1`.
///
/// The bandit tests use `mult = 6`; the average-reward MDP tests use `18`.
/// `kappa = inf` disables both tests.
pub fn rho_hat<F: Scalar>(t: usize, rate: &RateFunction<F>, conf: Confidence, kappa: f64, mult: f64) -> f64 {
    if kappa == 0.0 {
        return 0.0;
    }
    if kappa.is_infinite() {
        return f64::INFINITY;
    }
    let n_hat = (conf.horizon as f64).log2() + 1.0;
    kappa * mult * n_hat * conf.log_term() * rate.rho(t).as_f64()
}

/// One scheduled instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceRecord<B> {
    pub id: u64,
    pub order: u32,
    pub start: usize,
    pub end: usize,
    pub inner: B,
    /// Sum of every learner reward in `[start, t]`, whichever instance was active.
    pub reward_interval_sum: f64,
    pub active_rounds: u64,
}

impl<B> InstanceRecord<B> {
    pub fn tag(&self) -> String {
        format!("{}#{}", self.order, self.id)
    }

    pub fn covers(&self, t: usize) -> bool {
        self.start <= t && t <= self.end
    }
}

/// Instance whose interval closed on the current round.
#[derive(Debug, Clone, PartialEq)]
pub struct EndedInstance {
    pub id: u64,
    pub order: u32,
    pub reward_interval_sum: f64,
}

#[derive(Debug, Clone)]
pub struct MalgOutput<A> {
    pub g_tilde: f64,
    pub action: A,
    pub active_order: u32,
    pub active_id: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MalgOutcome {
    /// Signal of the active instance's learner.
    pub signal: StepSignal,
    /// Diagnostics of the active learner after its update.
    pub diagnostics: Option<LearnerDiagnostics>,
    pub ended: Vec<EndedInstance>,
}

/// MALG for one block; a single-owner state machine.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Malg<B> {
    n: u32,
    block_start: usize,
    probs: Vec<f64>,
    /// At most one live instance per order, indexed by order.
    slots: Vec<Option<InstanceRecord<B>>>,
    next_id: u64,
    active: Option<(u32, u64)>,
}

impl<B: BaseAlgorithm> Malg<B> {
    pub fn new(n: u32, block_start: usize, rate: &RateFunction<f64>) -> Self {
        Self::with_table(n, block_start, spawn_table(n, rate))
    }

    pub fn with_table(n: u32, block_start: usize, probs: Vec<f64>) -> Self {
        assert_eq!(probs.len(), n as usize + 1, "one spawn probability per order");
        Self {
            n,
            block_start,
            probs,
            slots: (0..=n).map(|_| None).collect(),
            next_id: 0,
            active: None,
        }
    }

    pub fn order(&self) -> u32 {
        self.n
    }

    pub fn block_start(&self) -> usize {
        self.block_start
    }

    pub fn block_end(&self) -> usize {
        self.block_start + (1usize << self.n) - 1
    }

    pub fn instances(&self) -> impl Iterator<Item = &InstanceRecord<B>> {
        self.slots.iter().flatten()
    }

    /// The covering instance of minimum order.
    pub fn active_instance(&self, t: usize) -> Option<&InstanceRecord<B>> {
        self.instances().find(|i| i.covers(t))
    }

    pub fn active_learner(&self) -> Option<&B> {
        let (m, _) = self.active?;
        self.slots[m as usize].as_ref().map(|i| &i.inner)
    }

    /// Spawns due instances, resolves the active one and returns its decision.
    pub fn begin_round<R, Fac>(
        &mut self,
        t: usize,
        obs: &B::Obs,
        factory: &Fac,
        rng: &mut R,
        events: &mut Vec<String>,
    ) -> Result<MalgOutput<B::Action>>
    where
        R: Rng + ?Sized,
        Fac: Fn() -> Result<B> + ?Sized,
    {
        if t < self.block_start || t > self.block_end() {
            return Err(Error::RoundOutOfRange {
                t,
                horizon: self.block_end(),
            });
        }
        for m in maybe_spawn(t, self.block_start, &self.probs, rng) {
            let slot = &mut self.slots[m as usize];
            assert!(slot.is_none(), "order-{m} slots are disjoint");
            let rec = InstanceRecord {
                id: self.next_id,
                order: m,
                start: t,
                end: t + (1usize << m) - 1,
                inner: factory()?,
                reward_interval_sum: 0.0,
                active_rounds: 0,
            };
            self.next_id += 1;
            events.push(format!("spawn:{}", rec.tag()));
            *slot = Some(rec);
        }
        let current = self.active_instance(t).expect("the order-n instance covers the block");
        let key = (current.order, current.id);
        if self.active != Some(key) {
            if let Some((pm, pid)) = self.active {
                if let Some(prev) = self.slots[pm as usize].as_ref().filter(|p| p.id == pid) {
                    events.push(format!("pause:{}", prev.tag()));
                }
            }
            let verb = if current.active_rounds == 0 {
                "activate"
            } else {
                "resume"
            };
            events.push(format!("{verb}:{}", current.tag()));
        }
        self.active = Some(key);
        let current = self.slots[key.0 as usize].as_ref().expect("just resolved");
        let g_tilde = current.inner.predict().value();
        Ok(MalgOutput {
            g_tilde,
            action: current.inner.act(obs),
            active_order: current.order,
            active_id: current.id,
        })
    }

    /// Updates only the active learner, credits the reward to every covering
    /// instance and retires instances whose interval ends at `t`.
    pub fn finish_round(
        &mut self,
        t: usize,
        obs: &B::Obs,
        action: &B::Action,
        feedback: &B::Feedback,
        events: &mut Vec<String>,
    ) -> Result<MalgOutcome> {
        let (m, _) = self.active.expect("begin_round precedes finish_round");
        let active = self.slots[m as usize].as_mut().expect("active instance is live");
        let signal = active.inner.update(obs, action, feedback)?;
        active.active_rounds += 1;
        let diagnostics = active.inner.diagnostics();
        let r = feedback.reward();
        let mut ended = Vec::new();
        for slot in &mut self.slots {
            if let Some(inst) = slot.as_mut().filter(|i| i.covers(t)) {
                inst.reward_interval_sum += r;
                if inst.end == t {
                    ended.push(EndedInstance {
                        id: inst.id,
                        order: inst.order,
                        reward_interval_sum: inst.reward_interval_sum,
                    });
                    events.push(format!("end:{}", inst.tag()));
                    *slot = None;
                }
            }
        }
        Ok(MalgOutcome {
            signal,
            diagnostics,
            ended,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base::{Snapshot, Ucb1};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sqrt_rate() -> RateFunction<f64> {
        RateFunction::inverse_sqrt(1.0, 1 << 12).unwrap()
    }

    #[test]
    fn spawn_probabilities() {
        let rate = sqrt_rate();
        assert_eq!(spawn_probability(4, 4, &rate).unwrap(), 1.0);
        assert!((spawn_probability(4, 0, &rate).unwrap() - 0.25).abs() < 1e-15);
        assert!((spawn_probability(4, 2, &rate).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(
            spawn_probability(2, 3, &rate),
            Err(Error::OrderOutOfRange { m: 3, n: 2 })
        ));
    }

    #[test]
    fn spawn_divisibility() {
        let probs = vec![1.0; 5];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(maybe_spawn(10, 10, &probs, &mut rng), vec![4, 3, 2, 1, 0]);
        assert_eq!(maybe_spawn(13, 10, &probs, &mut rng), vec![0]);
        assert_eq!(maybe_spawn(12, 10, &probs, &mut rng), vec![1, 0]);
        let probs = spawn_table(4, &sqrt_rate());
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            assert!(maybe_spawn(1, 1, &probs, &mut rng).contains(&4));
        }
    }

    #[test]
    fn rho_hat_arithmetic() {
        let conf = Confidence::default_for(1 << 10);
        let rate = RateFunction::inverse_sqrt(1.0, 1 << 10).unwrap();
        let direct = 11.0 * 20.0 * std::f64::consts::LN_2 * 6.0;
        assert!((rho_hat(1, &rate, conf, 1.0, 6.0) - direct).abs() < 1e-9);
        assert!((rho_hat(4, &rate, conf, 1.0, 6.0) - direct / 2.0).abs() < 1e-9);
        assert!((rho_hat(4, &rate, conf, 1.0, 6.0) - 457.5).abs() < 0.1);
        assert_eq!(rho_hat(4, &rate, conf, 0.0, 6.0), 0.0);
        assert_eq!(rho_hat(4, &rate, conf, f64::INFINITY, 6.0), f64::INFINITY);
    }

    /// Upfront sampling as written in the scheduling procedure: one loop over
    /// every round and order before the block runs.
    fn upfront_counts(n: u32, probs: &[f64], rng: &mut ChaCha8Rng) -> Vec<u32> {
        let mut counts = vec![0; n as usize + 1];
        for tau in 0..(1usize << n) {
            for m in (0..=n).rev() {
                if tau % (1 << m) == 0 && rng.gen::<f64>() < probs[m as usize] {
                    counts[m as usize] += 1;
                }
            }
        }
        counts
    }

    #[test]
    fn lazy_and_upfront_sampling_agree() {
        let n = 6;
        let probs = spawn_table(n, &sqrt_rate());
        let blocks = 10_000;
        let mut lazy = [0u64; 7];
        let mut upfront = [0u64; 7];
        let mut r1 = ChaCha8Rng::seed_from_u64(11);
        let mut r2 = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..blocks {
            for t in 1..=64 {
                for m in maybe_spawn(t, 1, &probs, &mut r1) {
                    lazy[m as usize] += 1;
                }
            }
            for (m, c) in upfront_counts(n, &probs, &mut r2).into_iter().enumerate() {
                upfront[m] += c as u64;
            }
        }
        for m in 0..=6usize {
            let slots = (1u64 << (6 - m)) as f64;
            let q = probs[m];
            let var = slots * q * (1.0 - q) * blocks as f64;
            let diff = (lazy[m] as f64 - upfront[m] as f64).abs();
            // difference of two independent binomials
            assert!(
                diff <= 4.0 * (2.0 * var).sqrt() + 1e-9,
                "order {m}: {} vs {}",
                lazy[m],
                upfront[m]
            );
        }
    }

    fn ucb_factory() -> impl Fn() -> Result<Ucb1> {
        || Ucb1::new(3, 2.0, Confidence::default_for(64))
    }

    fn run_rounds(malg: &mut Malg<Ucb1>, rounds: std::ops::RangeInclusive<usize>, rng: &mut ChaCha8Rng) -> Vec<String> {
        let factory = ucb_factory();
        let mut events = Vec::new();
        for t in rounds {
            let out = malg.begin_round(t, &(), &factory, rng, &mut events).unwrap();
            let r = if out.action.0 == 2 { 1.0 } else { 0.0 };
            malg.finish_round(t, &(), &out.action, &r, &mut events).unwrap();
        }
        events
    }

    #[test]
    fn single_order_zero_block_is_the_bare_learner() {
        let mut malg: Malg<Ucb1> = Malg::with_table(0, 7, vec![1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let factory = ucb_factory();
        let mut bare = factory().unwrap();
        let mut events = Vec::new();
        let out = malg.begin_round(7, &(), &factory, &mut rng, &mut events).unwrap();
        assert_eq!(out.g_tilde, bare.predict().value());
        assert_eq!(out.action, bare.act(&()));
        let outcome = malg.finish_round(7, &(), &out.action, &0.5, &mut events).unwrap();
        bare.update(&(), &out.action, &0.5).unwrap();
        assert_eq!(outcome.signal, StepSignal::Continue);
        assert_eq!(
            outcome.ended,
            vec![EndedInstance {
                id: 0,
                order: 0,
                reward_interval_sum: 0.5
            }]
        );
        assert_eq!(events, vec!["spawn:0#0", "activate:0#0", "end:0#0"]);
        assert!(malg.instances().next().is_none());
        assert!(malg.begin_round(8, &(), &factory, &mut rng, &mut events).is_err());
    }

    #[test]
    fn minimum_order_is_active_and_reward_sums_cover_all() {
        // order 2 and order 0 forced at t = 5, nothing else below order 4
        let mut malg: Malg<Ucb1> = Malg::with_table(4, 1, vec![0.0, 0.0, 0.0, 0.0, 1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ev = run_rounds(&mut malg, 1..=4, &mut rng);
        assert_eq!(ev, vec!["spawn:4#0", "activate:4#0"]);
        malg.probs = vec![1.0, 0.0, 1.0, 0.0, 1.0];
        let factory = ucb_factory();
        let mut events = Vec::new();
        let out = malg.begin_round(5, &(), &factory, &mut rng, &mut events).unwrap();
        assert_eq!(out.active_order, 0);
        assert_eq!(events, vec!["spawn:2#1", "spawn:0#2", "pause:4#0", "activate:0#2"]);
        malg.finish_round(5, &(), &out.action, &1.0, &mut events).unwrap();
        malg.probs = vec![0.0, 0.0, 1.0, 0.0, 1.0];
        events.clear();
        let out = malg.begin_round(6, &(), &factory, &mut rng, &mut events).unwrap();
        assert_eq!(out.active_order, 2);
        assert_eq!(events, vec!["activate:2#1"]);
        malg.finish_round(6, &(), &out.action, &1.0, &mut events).unwrap();
        let sums: Vec<(u32, f64, u64)> = malg
            .instances()
            .map(|i| (i.order, i.reward_interval_sum, i.active_rounds))
            .collect();
        assert_eq!(sums[0].0, 2);
        assert_eq!(sums[0].1, 2.0);
        assert_eq!(sums[0].2, 1);
        assert_eq!(sums[1].0, 4);
        assert_eq!(sums[1].2, 4);
        // order 4 saw both rewards earned while it was paused
        assert!(sums[1].1 >= 2.0);
        // finish order 2 at t = 8, then order 4 resumes
        malg.probs = vec![0.0, 0.0, 0.0, 0.0, 1.0];
        let ev = run_rounds(&mut malg, 7..=9, &mut rng);
        assert!(ev.contains(&"end:2#1".to_string()));
        assert!(ev.contains(&"resume:4#0".to_string()));
    }

    #[test]
    fn paused_instance_matches_uninterrupted_run() {
        let n = 5;
        let mut malg: Malg<Ucb1> = Malg::new(n, 1, &sqrt_rate());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let factory = ucb_factory();
        let mut shadow = factory().unwrap();
        let mut events = Vec::new();
        let mut env = ChaCha8Rng::seed_from_u64(10);
        for t in 1..=32 {
            let out = malg.begin_round(t, &(), &factory, &mut rng, &mut events).unwrap();
            let r: f64 = if env.gen::<f64>() < 0.3 + 0.2 * out.action.0 as f64 {
                1.0
            } else {
                0.0
            };
            if out.active_order == n {
                assert_eq!(out.action, shadow.act(&()));
                assert_eq!(out.g_tilde, shadow.predict().value());
                shadow.update(&(), &out.action, &r).unwrap();
            }
            malg.finish_round(t, &(), &out.action, &r, &mut events).unwrap();
            if t < 32 {
                let top = malg.instances().last().unwrap();
                assert_eq!(top.order, n);
                assert_eq!(top.inner.to_snapshot().unwrap(), shadow.to_snapshot().unwrap());
            }
        }
    }
}
