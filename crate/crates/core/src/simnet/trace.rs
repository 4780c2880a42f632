use std::io::Write;

use serde::Serialize;

use crate::error::SimError;
use crate::model::{Clamps, OperatorCommand, StateVector, UserId};
use crate::simnet::config::{ticks_to_ms, Mode, Ticks};
use crate::units::{Megawatts, Utility};

/// One agent's state after one state update.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub iteration: u32,
    pub agent_id: u32,
    #[serde(rename = "J_ii")]
    pub utility: Utility,
    pub own_load_mw: Megawatts,
    pub msgs_sent: u32,
    pub msgs_dropped: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FinalAgent {
    pub agent_id: UserId,
    pub active: bool,
    pub state: StateVector,
    pub utility: Utility,
    /// Load the user deploys: its own block of its own estimate, or the
    /// clamp value.
    pub own_load_mw: Megawatts,
    pub baseline_mw: Megawatts,
    pub iterations: u32,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct NetworkStats {
    pub sent: u64,
    /// Deliveries lost to packet loss.
    pub lost: u64,
    /// Arrivals rejected by the receiver (non-neighbour or malformed).
    pub rejected: u64,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunTrace {
    pub mode: Mode,
    pub seed: u64,
    pub records: Vec<TraceRecord>,
    /// Synchronous rounds executed, or the largest per-agent update count.
    pub rounds: u32,
    /// Last iteration at which any agent changed its estimate.
    pub convergence_iteration: u32,
    pub converged: bool,
    #[serde(skip)]
    pub simulated_ticks: Ticks,
    /// Simulated time at which the last estimate change took effect.
    #[serde(skip)]
    pub deployment_ticks: Ticks,
    pub agents: Vec<FinalAgent>,
    pub clamps: Clamps,
    /// Command in force when the run ended.
    pub command: OperatorCommand,
    pub stats: NetworkStats,
}

impl RunTrace {
    pub fn simulated_time_ms(&self) -> f64 {
        ticks_to_ms(self.simulated_ticks)
    }

    pub fn deployment_time_ms(&self) -> f64 {
        ticks_to_ms(self.deployment_ticks)
    }

    pub fn active_agents(&self) -> impl Iterator<Item = &FinalAgent> {
        self.agents.iter().filter(|a| a.active)
    }

    /// The common final state when every active agent agrees.
    pub fn consensus(&self) -> Option<&FinalAgent> {
        let mut it = self.active_agents();
        let first = it.next()?;
        it.all(|a| a.state == first.state).then_some(first)
    }

    pub fn consensus_utility(&self) -> Option<Utility> {
        self.consensus().map(|a| a.utility)
    }

    pub fn agent(&self, id: UserId) -> Option<&FinalAgent> {
        self.agents.iter().find(|a| a.agent_id == id)
    }

    /// Per-round per-agent CSV.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), SimError> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            w.serialize(r)
                .map_err(|e| SimError::Export(e.to_string()))?;
        }
        w.flush().map_err(|e| SimError::Export(e.to_string()))
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    /// Per-user deployed reduction: baseline minus deployed own load.
    pub fn deployed_reduction(&self) -> Megawatts {
        self.agents
            .iter()
            .map(|a| a.baseline_mw - a.own_load_mw)
            .sum()
    }
}
