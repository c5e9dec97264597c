//! Average-reward tabular MDPs: exact solvers, extended value iteration,
//! UCRL with adaptive confidence widening, and the strategies built on it.

pub mod diameter;
pub mod evi;
pub mod exp3p;
pub mod mdp;
pub mod strategy;
pub mod ucrl;

pub use diameter::{compute_diameter, hitting_times};
pub use evi::{bellman_residuals, evi, optimal_gain, solve_exact, ConfidenceSets, EviOutput};
pub use exp3p::Exp3P;
pub use mdp::TabularMdp;
pub use strategy::{borl, borl_layout, doubling_dbar, nbar, run_master_ucrl, ucrl_master, Known};
pub use ucrl::{rho_ucrl, widen_to_span, Transition, UcrlAcw};
