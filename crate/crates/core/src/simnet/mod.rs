//! Deterministic simulation of the agent network: topology, synchronous
//! rounds, asynchronous event-driven execution, packet loss, latency and
//! fault injection.

pub mod asynchronous;
pub mod config;
mod engine;
pub mod fault;
pub mod sync;
pub mod topology;
pub mod trace;

pub use asynchronous::run_asynchronous;
pub use config::{CostModel, Mode, SimConfig, Ticks};
pub use fault::{apply_fault, FaultEffect, FaultEvent, FaultKind, World};
pub use sync::{run_synchronous, Simulation};
pub use topology::{is_connected, Edge, Topology, TopologyError};
pub use trace::{FinalAgent, NetworkStats, RunTrace, TraceRecord};

use crate::error::SimError;
use crate::scenario::Scenario;

/// Runs a scenario in the configured mode.
pub fn run(scenario: &Scenario, config: &SimConfig) -> Result<RunTrace, SimError> {
    match config.mode {
        Mode::Sync => run_synchronous(scenario, config),
        Mode::Async => run_asynchronous(scenario, config),
    }
}
