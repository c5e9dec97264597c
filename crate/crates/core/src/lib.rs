//! Non-stationary bandits and reinforcement learning by multi-scale
//! scheduling, stationarity tests and restarts around stationary optimistic
//! learners, with exact dynamic-regret evaluation.
//!
//! * [`env`] ground-truth environments and their oracles
//! * [`base`] the base-learner contract and UCB1, OFUL, GLM-UCB, Q-UCB
//! * [`malg`] randomized multi-scale scheduling within a block
//! * [`master`] doubling blocks, the two tests, restarts and run logs
//! * [`inf_mdp`] average-reward MDPs: EVI, UCRL-ACW and its strategies
//! * [`harness`] configs, seeded runs, aggregation and plots
//!
//! Numerical kernels are generic over [`scalar::Scalar`]; the aliases below
//! fix them to `f64`, which is what the simulator uses.

pub mod base;
pub mod env;
pub mod error;
pub mod harness;
pub mod inf_mdp;
pub mod malg;
pub mod master;
pub mod scalar;

pub use error::{Error, Result};

pub type Rate = base::RateFunction<f64>;
pub type Mdp = inf_mdp::TabularMdp<f64>;
pub type Sets = inf_mdp::ConfidenceSets<f64>;
pub type EviSolution = inf_mdp::EviOutput<f64>;
