//! State shared by the synchronous and asynchronous schedulers.

use crate::error::{SimError, SolverError};
use crate::knapsack::CapacityConstraint;
use crate::protocol::AgentState;
use crate::scenario::Scenario;
use crate::simnet::config::{ms_to_ticks, SimConfig, Ticks};
use crate::simnet::fault::{apply_fault, FaultEffect, FaultEvent, FaultKind, World};
use crate::simnet::trace::{FinalAgent, NetworkStats, TraceRecord};

pub(crate) fn constraint(world: &World) -> Result<CapacityConstraint<'_>, SolverError> {
    CapacityConstraint::new(&world.coalition, world.command.capacity_mw, &world.clamps)
}

#[derive(Debug, Clone)]
pub(crate) struct Engine {
    pub world: World,
    /// Indexed by coalition position.
    pub agents: Vec<AgentState>,
    pub seed: u64,
    pub k: u32,
    pub max_iterations: u32,
    pub stats: NetworkStats,
    pub records: Vec<TraceRecord>,
}

impl Engine {
    pub fn new(scenario: &Scenario, config: &SimConfig) -> Result<Self, SimError> {
        let problems = config.problems();
        if !problems.is_empty() {
            return Err(SimError::Setup(problems.join("; ")));
        }
        let mut world = World::new(
            scenario.coalition.clone(),
            scenario.topology.clone(),
            scenario.command(),
        );
        world.packet_loss = config.packet_loss;
        world.mean_delay_ms = config.mean_delay_ms;
        let agents = {
            let limit = constraint(&world)?;
            limit.check_satisfiable()?;
            world
                .coalition
                .users()
                .iter()
                .map(|u| AgentState::init(u.user_id, world.topology.neighbors(u.user_id), &limit))
                .collect::<Result<Vec<_>, _>>()?
        };
        Ok(Engine {
            world,
            agents,
            seed: config.seed.or(scenario.seed).unwrap_or(0),
            k: config.k,
            max_iterations: config.max_iterations.unwrap_or(scenario.max_iterations),
            stats: NetworkStats::default(),
            records: Vec::new(),
        })
    }

    pub fn apply(&mut self, fault: &FaultKind) -> Result<(), SimError> {
        match apply_fault(&mut self.world, fault)? {
            FaultEffect::LinkRemoved(a, b) => {
                for (x, y) in [(a, b), (b, a)] {
                    let idx = self.index(x);
                    self.agents[idx].forget_neighbor(y);
                }
            }
            FaultEffect::AgentLost { agent, former } => {
                let idx = self.index(agent);
                self.agents[idx].active = false;
                for j in former {
                    let jdx = self.index(j);
                    self.agents[jdx].forget_neighbor(agent);
                }
                self.refresh()?;
            }
            FaultEffect::Clamped(_) | FaultEffect::Command => self.refresh()?,
            FaultEffect::Network => {}
        }
        Ok(())
    }

    /// Broadcast of a changed command or clamp set to every agent.
    pub fn refresh(&mut self) -> Result<(), SimError> {
        let limit = constraint(&self.world)?;
        limit.check_satisfiable()?;
        for agent in &mut self.agents {
            agent.reassess(&limit);
            agent.reset_stability();
        }
        Ok(())
    }

    pub fn index(&self, id: crate::model::UserId) -> usize {
        self.world
            .coalition
            .index_of(id)
            .expect("faults are checked against the coalition")
    }

    pub fn all_converged(&self) -> bool {
        self.agents
            .iter()
            .filter(|a| a.active)
            .all(|a| a.locally_converged(self.k))
    }

    pub fn final_agents(&self) -> Result<Vec<FinalAgent>, SimError> {
        let limit = constraint(&self.world)?;
        Ok(self
            .agents
            .iter()
            .map(|a| FinalAgent {
                agent_id: a.agent_id,
                active: a.active,
                state: a.own.state.clone(),
                utility: a.own.utility,
                own_load_mw: a.own_load(&limit),
                baseline_mw: self.world.coalition.user_baseline(a.index),
                iterations: a.iteration,
                converged: a.locally_converged(self.k),
            })
            .collect())
    }
}

/// Orders a fault schedule by trigger. `key` maps each event to its trigger
/// in the scheduler's unit; ties keep file order.
pub(crate) fn schedule<T: Ord + Copy>(
    faults: &[FaultEvent],
    key: impl Fn(&FaultEvent) -> T,
) -> Vec<(T, FaultKind)> {
    let mut out: Vec<(T, FaultKind)> = faults.iter().map(|f| (key(f), f.kind.clone())).collect();
    out.sort_by_key(|(t, _)| *t);
    out
}

pub(crate) fn fault_boundary(f: &FaultEvent, round: Ticks) -> u32 {
    match (f.at_iteration, f.at_time_ms) {
        (Some(k), _) => k,
        (None, Some(ms)) => (ms_to_ticks(ms) / round.max(1)) as u32,
        (None, None) => 0,
    }
}

pub(crate) fn fault_time(f: &FaultEvent, round: Ticks) -> Ticks {
    match (f.at_time_ms, f.at_iteration) {
        (Some(ms), _) => ms_to_ticks(ms),
        (None, Some(k)) => k as Ticks * round,
        (None, None) => 0,
    }
}
