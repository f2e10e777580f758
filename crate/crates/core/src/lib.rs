//! Hyperband and SuccessiveHalving.
//!
//! - [`search_space`]: declare and sample configuration spaces.
//! - [`evaluator`]: loss oracles, budget ledger, rung execution, trial logs.
//! - [`sha`]: SuccessiveHalving (practical, infinite-horizon, finite-horizon).
//! - [`hyperband`]: bracket planning and the Hyperband outer loops.
//! - [`baselines`]: uniform allocation and random search.
//! - [`niab_sim`]: synthetic infinite-armed bandit populations.
//! - [`theory_oracles`]: budget and complexity formulas.

pub mod evaluator;
pub mod search_space;
pub mod niab_sim;
pub mod theory_oracles;
pub mod sha;
pub mod hyperband;
pub mod baselines;
