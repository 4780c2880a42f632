//! Lockstep rounds: broadcast, ingest, update.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::SimError;
use crate::model::OperatorCommand;
use crate::protocol::AgentState;
use crate::scenario::Scenario;
use crate::simnet::config::{stream_rng, CostModel, Mode, SimConfig, Ticks, NETWORK_STREAM};
use crate::simnet::engine::{constraint, fault_boundary, schedule, Engine};
use crate::simnet::fault::{FaultKind, World};
use crate::simnet::trace::{RunTrace, TraceRecord};

/// A synchronous run that can be stepped, re-commanded and resumed.
#[derive(Debug, Clone)]
pub struct Simulation {
    engine: Engine,
    cost: CostModel,
    faults: Vec<(u32, FaultKind)>,
    next_fault: usize,
    rng: ChaCha8Rng,
    round: u32,
    last_change: u32,
}

impl Simulation {
    pub fn new(scenario: &Scenario, config: &SimConfig) -> Result<Self, SimError> {
        let engine = Engine::new(scenario, config)?;
        let round_ticks = config.cost.round();
        Ok(Simulation {
            rng: stream_rng(engine.seed, NETWORK_STREAM),
            faults: schedule(&scenario.faults, |f| fault_boundary(f, round_ticks)),
            engine,
            cost: config.cost,
            next_fault: 0,
            round: 0,
            last_change: 0,
        })
    }

    /// Rounds completed so far.
    pub fn round(&self) -> u32 {
        self.round
    }

    /// Last round in which any agent changed its estimate.
    pub fn last_change(&self) -> u32 {
        self.last_change
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.engine.agents
    }

    pub fn world(&self) -> &World {
        &self.engine.world
    }

    pub fn round_ticks(&self) -> Ticks {
        self.cost.round()
    }

    fn faults_pending_before(&self, limit: u32) -> bool {
        self.faults[self.next_fault..]
            .first()
            .is_some_and(|(k, _)| *k < limit)
    }

    /// Every active agent is locally converged and no scheduled fault is
    /// still to fire within the iteration budget.
    pub fn globally_converged(&self) -> bool {
        self.engine.all_converged() && !self.faults_pending_before(self.engine.max_iterations)
    }

    /// Broadcasts a new operator command to every agent.
    pub fn apply_command(&mut self, command: OperatorCommand) -> Result<(), SimError> {
        self.engine.world.command = command;
        self.engine.refresh()
    }

    pub fn apply_fault(&mut self, fault: &FaultKind) -> Result<(), SimError> {
        self.engine.apply(fault)
    }

    /// Executes one round; returns whether any estimate changed.
    pub fn step(&mut self) -> Result<bool, SimError> {
        while let Some((k, fault)) = self.faults.get(self.next_fault) {
            if *k > self.round {
                break;
            }
            let fault = fault.clone();
            self.next_fault += 1;
            self.engine.apply(&fault)?;
        }

        let Engine {
            world,
            agents,
            stats,
            records,
            ..
        } = &mut self.engine;
        let limit = constraint(world)?;
        let n = agents.len();
        let mut sent = vec![0u32; n];
        let mut dropped = vec![0u32; n];

        // Stage 1: every delivery is an independent loss trial, drawn in
        // (sender, receiver) order whether or not loss is enabled.
        let mut deliveries = Vec::new();
        for sender in agents.iter().filter(|a| a.active) {
            let bytes = sender.encode();
            for j in world.topology.neighbors(sender.agent_id) {
                if !world.active.contains(&j) {
                    continue;
                }
                let to = world
                    .coalition
                    .index_of(j)
                    .expect("topology matches coalition");
                sent[sender.index] += 1;
                stats.sent += 1;
                stats.bytes += bytes.len() as u64;
                let draw: f64 = self.rng.random();
                if draw < world.packet_loss {
                    dropped[sender.index] += 1;
                    stats.lost += 1;
                } else {
                    deliveries.push((to, bytes.clone()));
                }
            }
        }
        for (to, bytes) in deliveries {
            if agents[to].ingest_bytes(&bytes, &limit) != crate::protocol::Ingest::Accepted {
                dropped[to] += 1;
                stats.rejected += 1;
            }
        }

        // Stage 2.
        let mut changed = false;
        for agent in agents.iter_mut().filter(|a| a.active) {
            changed |= agent.state_update(&limit)?;
            debug_assert!(limit.fits(&limit.assess(&agent.own.state)));
        }
        self.round += 1;
        for agent in agents.iter().filter(|a| a.active) {
            records.push(TraceRecord {
                iteration: self.round,
                agent_id: agent.agent_id.0,
                utility: agent.own.utility,
                own_load_mw: agent.own_load(&limit),
                msgs_sent: sent[agent.index],
                msgs_dropped: dropped[agent.index],
            });
        }
        if changed {
            self.last_change = self.round;
        }
        Ok(changed)
    }

    /// Steps until global convergence or until `budget` more rounds ran.
    /// Returns the number of rounds executed.
    pub fn run_for(&mut self, budget: u32) -> Result<u32, SimError> {
        let start = self.round;
        while self.round - start < budget {
            self.step()?;
            if self.globally_converged() {
                break;
            }
        }
        Ok(self.round - start)
    }

    /// Steps until global convergence or the scenario's iteration cap.
    pub fn run(&mut self) -> Result<(), SimError> {
        let budget = self.engine.max_iterations.saturating_sub(self.round);
        self.run_for(budget).map(|_| ())
    }

    pub fn trace(&self) -> Result<RunTrace, SimError> {
        let round = self.cost.round();
        Ok(RunTrace {
            mode: Mode::Sync,
            seed: self.engine.seed,
            records: self.engine.records.clone(),
            rounds: self.round,
            convergence_iteration: self.last_change,
            converged: self.globally_converged(),
            simulated_ticks: self.round as Ticks * round,
            deployment_ticks: self.last_change as Ticks * round,
            agents: self.engine.final_agents()?,
            clamps: self.engine.world.clamps.clone(),
            command: self.engine.world.command,
            stats: self.engine.stats,
        })
    }
}

pub fn run_synchronous(scenario: &Scenario, config: &SimConfig) -> Result<RunTrace, SimError> {
    let mut sim = Simulation::new(scenario, config)?;
    sim.run()?;
    sim.trace()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{StateVector, UserId};
    use crate::simnet::fault::FaultEvent;
    use crate::units::{Megawatts, Utility};

    fn off_set(trace: &RunTrace, scenario: &Scenario) -> Vec<u32> {
        let state = &trace.consensus().expect("consensus").state;
        let c = &scenario.coalition;
        (0..c.num_users())
            .filter(|&i| c.block(i).any(|k| !state.get(k)))
            .map(|i| c.user_at(i).user_id.0)
            .collect()
    }

    #[test]
    fn three_agent_golden() {
        let s = Scenario::bundled("three-agent").unwrap();
        let trace = run_synchronous(&s, &SimConfig::default()).unwrap();
        let c = trace.consensus().unwrap();
        assert_eq!(c.utility, Utility::from_whole(220));
        assert_eq!(c.state, StateVector::parse("0 (0 1) 1").unwrap());
        assert!(trace.convergence_iteration <= 3);
        assert!(trace.converged);
        assert_eq!(trace.deployed_reduction(), Megawatts::from_whole(30));
    }

    #[test]
    fn three_agent_round_one_matches_hand_trace() {
        let s = Scenario::bundled("three-agent").unwrap();
        let mut sim = Simulation::new(&s, &SimConfig::default()).unwrap();
        let j = |sim: &Simulation| -> Vec<i64> {
            sim.agents()
                .iter()
                .map(|a| a.own.utility.raw() / 10_000)
                .collect()
        };
        assert_eq!(j(&sim), vec![40, 90, 160]);
        sim.step().unwrap();
        assert_eq!(j(&sim), vec![130, 220, 160]);
    }

    #[test]
    fn ieee14_golden() {
        let s = Scenario::bundled("ieee14").unwrap();
        let trace = run_synchronous(&s, &SimConfig::default()).unwrap();
        assert_eq!(trace.consensus_utility(), Some(Utility::from_whole(7120)));
        assert_eq!(off_set(&trace, &s), vec![10, 14]);
        assert!((12..=16).contains(&trace.convergence_iteration));
        assert_eq!(trace.deployed_reduction(), Megawatts::from_whole(140));
    }

    #[test]
    fn ieee14_load_disconnect() {
        let mut s = Scenario::bundled("ieee14").unwrap();
        s.faults.push(FaultEvent::at_iteration(
            5,
            FaultKind::LoadDisconnect {
                user: UserId(10),
                clamp_mw: Megawatts::from_whole(100),
            },
        ));
        let trace = run_synchronous(&s, &SimConfig::default()).unwrap();
        assert_eq!(trace.consensus_utility(), Some(Utility::from_whole(7000)));
        assert_eq!(off_set(&trace, &s), vec![11, 14]);
    }

    #[test]
    fn simulated_time_identity() {
        let s = Scenario::bundled("ieee14").unwrap();
        let trace = run_synchronous(&s, &SimConfig::default()).unwrap();
        assert_eq!(trace.simulated_ticks, trace.rounds as Ticks * 400);
        assert_eq!(trace.simulated_time_ms(), trace.rounds as f64 * 4.0);
    }

    #[test]
    fn capacity_drop_is_repaired_within_one_round() {
        let s = Scenario::bundled("ieee14").unwrap();
        let mut sim = Simulation::new(&s, &SimConfig::default()).unwrap();
        sim.run().unwrap();
        let mut cmd = sim.world().command;
        cmd.capacity_mw = Megawatts::from_whole(500);
        sim.apply_command(cmd).unwrap();
        sim.step().unwrap();
        let limit = constraint(sim.world()).unwrap();
        for a in sim.agents() {
            assert!(limit.fits(&limit.assess(&a.own.state)));
        }
    }

    #[test]
    fn infeasible_setup_is_rejected() {
        let mut s = Scenario::bundled("three-agent").unwrap();
        s.resolved.command.capacity_mw = Megawatts::from_whole(10);
        s.faults.push(FaultEvent::at_iteration(
            0,
            FaultKind::LoadDisconnect {
                user: UserId(3),
                clamp_mw: Megawatts::from_whole(40),
            },
        ));
        assert!(run_synchronous(&s, &SimConfig::default()).is_err());
    }
}
