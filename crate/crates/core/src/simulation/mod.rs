//! Monte-Carlo experiment on the three-level, seven-variable hierarchy.
//!
//! Bottom series follow a two-factor model with correlated idiosyncratic
//! noise; each expert observes noisy, possibly biased and mis-loaded
//! signals of the factors. Replicates are independent and each has its own
//! random stream, so parallel and serial runs give the same numbers.

mod dgp;
mod experiment;
pub mod nearcorr;
mod participation;

pub use dgp::{generate_replication, ErrorCorrelation, Replication, Setting, SimulationConfig};
pub use experiment::{method_weights, run_experiment, ExperimentTable, Method};
pub use participation::{participation_mask, Participation, TwoStateChain};
