//! Per-agent state machine.
//!
//! Each agent keeps its own estimate `(x_ii, J_ii)` of the coalition-wide
//! optimum plus the latest estimate heard from every neighbour. A round is
//! information discovery ([`AgentState::ingest`], a plain copy of the
//! neighbour's estimate) followed by a state update
//! ([`AgentState::state_update`]): the best of the agent's own estimate and
//! all buffered estimates, each with the agent's own block re-optimized.

use std::collections::BTreeMap;

use crate::error::{CodecError, ProtocolError};
use crate::knapsack::{CapacityConstraint, Solution};
use crate::model::{rank, Assessment, StateVector, UserId};
use crate::protocol::codec::{decode_message, encode_message, ProtocolMessage};
use crate::units::{Megawatts, Utility};

/// A state together with its exact utility and load.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Estimate {
    pub state: StateVector,
    pub utility: Utility,
    pub load: Megawatts,
}

impl Estimate {
    fn assessment(&self) -> Assessment {
        Assessment {
            utility: self.utility,
            load: self.load,
        }
    }

    fn of(state: StateVector, limit: &CapacityConstraint<'_>) -> Self {
        let a = limit.assess(&state);
        Estimate {
            state,
            utility: a.utility,
            load: a.load,
        }
    }
}

impl From<Solution> for Estimate {
    fn from(s: Solution) -> Self {
        Estimate {
            state: s.state,
            utility: s.utility,
            load: s.load_mw,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborBuffer {
    pub estimate: Estimate,
    /// Local iteration at which the last message from this neighbour arrived.
    pub last_heard: Option<u32>,
}

/// Result of offering a message to an agent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Ingest {
    Accepted,
    NotNeighbor(UserId),
    Malformed(CodecError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentState {
    pub agent_id: UserId,
    /// Position of the agent's user in coalition order.
    pub index: usize,
    pub own: Estimate,
    pub neighbors: BTreeMap<UserId, NeighborBuffer>,
    pub iteration: u32,
    pub active: bool,
    pub stable_rounds: u32,
    /// Messages rejected as malformed or from non-neighbours.
    pub dropped: u64,
}

/// `candidate` with the agent's block re-optimized, or as-is (clamps
/// applied) for clamped or empty blocks. Normalizing never changes the
/// assessment since clamped coordinates carry no weight in it.
fn best_own_block(
    index: usize,
    candidate: &Estimate,
    limit: &CapacityConstraint<'_>,
) -> Option<Estimate> {
    let mut state = candidate.state.clone();
    limit.normalize(&mut state);
    let a = candidate.assessment();
    let empty = limit.coalition().block(index).is_empty();
    if limit.is_clamped(index) || empty {
        return limit.fits(&a).then_some(Estimate {
            state,
            utility: a.utility,
            load: a.load,
        });
    }
    limit
        .optimize_block_from(state, a, index)
        .map(Estimate::from)
}

impl AgentState {
    /// Starts an agent at the best feasible setting of its own block over an
    /// otherwise all-off vector; every neighbour buffer starts as a copy.
    pub fn init(
        agent_id: UserId,
        neighbors: impl IntoIterator<Item = UserId>,
        limit: &CapacityConstraint<'_>,
    ) -> Result<Self, ProtocolError> {
        let coalition = limit.coalition();
        let index = coalition
            .index_of(agent_id)
            .ok_or(crate::error::ModelError::UnknownUser(agent_id))?;
        let own = best_own_block(index, &Estimate::of(coalition.all_off(), limit), limit)
            .ok_or(ProtocolError::NoFeasibleState(agent_id))?;
        let neighbors = neighbors
            .into_iter()
            .map(|j| {
                (
                    j,
                    NeighborBuffer {
                        estimate: own.clone(),
                        last_heard: None,
                    },
                )
            })
            .collect();
        Ok(AgentState {
            agent_id,
            index,
            own,
            neighbors,
            iteration: 0,
            active: true,
            stable_rounds: 0,
            dropped: 0,
        })
    }

    pub fn message(&self) -> ProtocolMessage {
        ProtocolMessage {
            sender_id: self.agent_id.0,
            iteration: self.iteration,
            utility: self.own.utility.as_f64(),
            state: self.own.state.clone(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        encode_message(&self.message())
    }

    /// Stage 1: copies a neighbour's estimate into its buffer. The utility
    /// is recomputed from the state rather than trusted from the wire.
    pub fn ingest(&mut self, msg: &ProtocolMessage, limit: &CapacityConstraint<'_>) -> Ingest {
        let sender = UserId(msg.sender_id);
        let n = limit.coalition().num_sectors();
        let Some(buffer) = self.neighbors.get_mut(&sender) else {
            self.dropped += 1;
            return Ingest::NotNeighbor(sender);
        };
        if msg.state.len() != n {
            self.dropped += 1;
            return Ingest::Malformed(CodecError::Length {
                expected: n,
                got: msg.state.len(),
            });
        }
        if buffer.estimate.state != msg.state {
            let a = limit.assess_change(
                &buffer.estimate.state,
                buffer.estimate.assessment(),
                &msg.state,
            );
            buffer.estimate = Estimate {
                state: msg.state.clone(),
                utility: a.utility,
                load: a.load,
            };
        }
        buffer.last_heard = Some(self.iteration);
        Ingest::Accepted
    }

    /// Decodes and ingests raw bytes; undecodable messages are dropped.
    pub fn ingest_bytes(&mut self, bytes: &[u8], limit: &CapacityConstraint<'_>) -> Ingest {
        match decode_message(bytes, limit.coalition().num_sectors()) {
            Ok(msg) => self.ingest(&msg, limit),
            Err(err) => {
                self.dropped += 1;
                Ingest::Malformed(err)
            }
        }
    }

    /// Stage 2: adopts the best candidate after re-optimizing the agent's own
    /// block. Returns whether the own estimate changed.
    pub fn state_update(&mut self, limit: &CapacityConstraint<'_>) -> Result<bool, ProtocolError> {
        let mut best: Option<Estimate> = None;
        let candidates =
            std::iter::once(&self.own).chain(self.neighbors.values().map(|b| &b.estimate));
        for candidate in candidates {
            let Some(result) = best_own_block(self.index, candidate, limit) else {
                continue;
            };
            let better = match &best {
                None => true,
                Some(b) => rank(
                    (&result.assessment(), &result.state),
                    (&b.assessment(), &b.state),
                )
                .is_gt(),
            };
            if better {
                best = Some(result);
            }
        }
        let next = match best {
            Some(b) => b,
            None => best_own_block(
                self.index,
                &Estimate::of(limit.coalition().all_off(), limit),
                limit,
            )
            .ok_or(ProtocolError::NoFeasibleState(self.agent_id))?,
        };
        let changed = next != self.own;
        self.own = next;
        self.iteration += 1;
        self.stable_rounds = if changed { 0 } else { self.stable_rounds + 1 };
        Ok(changed)
    }

    /// True once the estimate has been stable for `k` updates and every
    /// neighbour has been heard from and agrees with it.
    pub fn locally_converged(&self, k: u32) -> bool {
        self.stable_rounds >= k
            && self
                .neighbors
                .values()
                .all(|b| b.last_heard.is_some() && b.estimate.state == self.own.state)
    }

    pub fn forget_neighbor(&mut self, j: UserId) {
        self.neighbors.remove(&j);
    }

    /// Restarts the stability count, e.g. after the operator changes the command.
    pub fn reset_stability(&mut self) {
        self.stable_rounds = 0;
    }

    /// Recomputes stored utilities and loads after the clamp set or command
    /// changed. States are left untouched; the next update repairs them.
    pub fn reassess(&mut self, limit: &CapacityConstraint<'_>) {
        let a = limit.assess(&self.own.state);
        self.own.utility = a.utility;
        self.own.load = a.load;
        for b in self.neighbors.values_mut() {
            let a = limit.assess(&b.estimate.state);
            b.estimate.utility = a.utility;
            b.estimate.load = a.load;
        }
    }

    pub fn own_load(&self, limit: &CapacityConstraint<'_>) -> Megawatts {
        limit.own_load(&self.own.state, self.index)
    }
}
