//! Distributed dynamic programming for incentive-based load management.
//!
//! Cooperating agents, one per user, search for the on/off assignment of
//! every load sector that maximizes total weighted load utility while the
//! total load stays within an operator-imposed capacity. The crate provides
//! the problem model, exact centralized solvers, the per-agent protocol and
//! its wire format, a deterministic network simulator with fault injection,
//! and system-operator arithmetic.

pub mod error;
pub mod knapsack;
pub mod model;
pub mod operator;
pub mod protocol;
pub mod scenario;
pub mod simnet;
pub mod units;

pub use error::{CodecError, ModelError, ProtocolError, SolverError};
pub use knapsack::{
    local_block_optimize, solve_bruteforce, solve_centralized, CapacityConstraint, Solution,
};
pub use model::{
    evaluate_load, evaluate_utility, is_feasible, Clamps, Coalition, LoadSector, OperatorCommand,
    StateVector, UserId, UserLoad,
};
pub use units::{Megawatts, Utility, Weight};
