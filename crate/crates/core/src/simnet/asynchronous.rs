//! Event-driven execution with per-agent clocks and message latency.
//!
//! Each agent alternates an information-discovery activation (drain the
//! inbox into the neighbour buffers, then broadcast) and a state-update
//! activation, each taking its stage cost with a little per-agent jitter.
//! The scheduler normally runs the agent whose clock is earliest. To honour
//! the bounded-delay condition it also keeps a deadline per agent: no agent
//! may go more than `P / 2` scheduler steps without an activation, so each
//! one gets an ID and an SU within every window of `P` steps.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::error::SimError;
use crate::protocol::{AgentState, Ingest};
use crate::scenario::Scenario;
use crate::simnet::config::{
    agent_stream, stream_rng, Mode, SimConfig, Ticks, NETWORK_STREAM, TICKS_PER_MS,
};
use crate::simnet::engine::{constraint, fault_time, schedule, Engine};
use crate::simnet::trace::{RunTrace, TraceRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Discover,
    Update,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Delivery {
    at: Ticks,
    seq: u64,
    to: usize,
    bytes: Vec<u8>,
}

struct Clocks {
    /// `(next activation time, agent index)` for every runnable agent.
    ready: BTreeSet<(Ticks, usize)>,
    /// `(deadline step, agent index)` for the same agents.
    due: BTreeSet<(u64, usize)>,
    at: Vec<Ticks>,
    deadline: Vec<u64>,
    phase: Vec<Phase>,
    rngs: Vec<ChaCha8Rng>,
}

impl Clocks {
    fn set(&mut self, i: usize, t: Ticks, deadline: u64) {
        self.remove(i);
        self.at[i] = t;
        self.deadline[i] = deadline;
        self.ready.insert((t, i));
        self.due.insert((deadline, i));
    }

    fn remove(&mut self, i: usize) {
        self.ready.remove(&(self.at[i], i));
        self.due.remove(&(self.deadline[i], i));
    }
}

fn jittered(rng: &mut ChaCha8Rng, base: Ticks, jitter: f64) -> Ticks {
    if base == 0 || jitter == 0.0 {
        return base;
    }
    let f: f64 = rng.random_range(-jitter..=jitter);
    ((base as f64) * (1.0 + f)).round().max(1.0) as Ticks
}

fn latency(rng: &mut ChaCha8Rng, mean_ms: f64) -> Ticks {
    if mean_ms <= 0.0 {
        return 0;
    }
    let exp = Exp::new(1.0 / (mean_ms * TICKS_PER_MS as f64)).expect("positive rate");
    exp.sample(rng).round() as Ticks
}

pub fn run_asynchronous(scenario: &Scenario, config: &SimConfig) -> Result<RunTrace, SimError> {
    let mut engine = Engine::new(scenario, config)?;
    let n = engine.agents.len();
    let window = config.fairness_window.unwrap_or(2 * n);
    if window < 2 * n.max(1) {
        return Err(SimError::Setup(format!(
            "fairness window {window} is below 2n = {}",
            2 * n
        )));
    }
    let gap = (window / 2) as u64;
    let round = config.cost.round();
    let faults = schedule(&scenario.faults, |f| fault_time(f, round));
    let mut next_fault = 0;
    let mut net = stream_rng(engine.seed, NETWORK_STREAM);

    let mut clocks = Clocks {
        ready: BTreeSet::new(),
        due: BTreeSet::new(),
        at: vec![0; n],
        deadline: vec![0; n],
        phase: vec![Phase::Discover; n],
        rngs: (0..n)
            .map(|i| stream_rng(engine.seed, agent_stream(i)))
            .collect(),
    };
    let mut starts: Vec<(Ticks, usize)> = (0..n)
        .map(|i| (clocks.rngs[i].random_range(0..config.cost.t_id.max(1)), i))
        .collect();
    starts.sort();
    for (rank, (t, i)) in starts.into_iter().enumerate() {
        clocks.set(i, t, rank as u64);
    }

    let mut inbox: Vec<Vec<Vec<u8>>> = vec![Vec::new(); n];
    let mut in_flight: BinaryHeap<Reverse<Delivery>> = BinaryHeap::new();
    let mut seq = 0u64;
    let mut now: Ticks = 0;
    let mut step = 0u64;
    let mut last_change: (u32, Ticks) = (0, 0);
    let mut pending_sent = vec![0u32; n];
    let mut pending_dropped = vec![0u32; n];
    // An agent's convergence flag only moves when it activates or a fault
    // fires, so it is tracked incrementally.
    let flag = |agents: &[AgentState], k: u32, j: usize| {
        !agents[j].active || agents[j].locally_converged(k)
    };
    let mut converged: Vec<bool> = (0..n).map(|j| flag(&engine.agents, engine.k, j)).collect();
    let mut unconverged = converged.iter().filter(|c| !**c).count();

    // Each pass of the outer loop runs until the next fault is due; the
    // capacity constraint only changes when a fault fires.
    loop {
        let Engine {
            world,
            agents,
            stats,
            records,
            max_iterations,
            k,
            ..
        } = &mut engine;
        let limit = constraint(world)?;
        let fault_due = loop {
            if unconverged == 0 && next_fault == faults.len() {
                break false;
            }
            // Forced agent first, otherwise the earliest clock.
            let forced = clocks
                .due
                .first()
                .filter(|&&(d, _)| d <= step)
                .map(|&(_, i)| i);
            let Some(i) = forced.or_else(|| clocks.ready.first().map(|&(_, i)| i)) else {
                break false;
            };
            let t = clocks.at[i].max(now);

            // Everything that happens up to `t`, in time order; faults first on ties.
            let mut fault_due = false;
            loop {
                let next_delivery = in_flight.peek().map(|Reverse(d)| d.at);
                let next_fault_at = faults.get(next_fault).map(|(at, _)| *at);
                match (next_fault_at, next_delivery) {
                    (Some(ft), d) if ft <= t && d.is_none_or(|d| ft <= d) => {
                        now = now.max(ft);
                        fault_due = true;
                        break;
                    }
                    (_, Some(dt)) if dt <= t => {
                        let Reverse(d) = in_flight.pop().expect("peeked");
                        now = now.max(dt);
                        inbox[d.to].push(d.bytes);
                    }
                    _ => break,
                }
            }
            if fault_due {
                break true;
            }
            now = t;

            let agent = &mut agents[i];
            match clocks.phase[i] {
                Phase::Discover => {
                    for bytes in inbox[i].drain(..) {
                        if agent.ingest_bytes(&bytes, &limit) != Ingest::Accepted {
                            pending_dropped[i] += 1;
                            stats.rejected += 1;
                        }
                    }
                    let bytes = agent.encode();
                    for j in world.topology.neighbors(agent.agent_id) {
                        if !world.active.contains(&j) {
                            continue;
                        }
                        let to = world
                            .coalition
                            .index_of(j)
                            .expect("topology matches coalition");
                        pending_sent[i] += 1;
                        stats.sent += 1;
                        stats.bytes += bytes.len() as u64;
                        let draw: f64 = net.random();
                        let delay = latency(&mut net, world.mean_delay_ms);
                        if draw < world.packet_loss {
                            pending_dropped[i] += 1;
                            stats.lost += 1;
                            continue;
                        }
                        seq += 1;
                        in_flight.push(Reverse(Delivery {
                            at: now + delay,
                            seq,
                            to,
                            bytes: bytes.clone(),
                        }));
                    }
                    let d = jittered(&mut clocks.rngs[i], config.cost.t_id, config.jitter);
                    clocks.set(i, now + d, step + gap);
                    clocks.phase[i] = Phase::Update;
                }
                Phase::Update => {
                    let changed = agent.state_update(&limit)?;
                    debug_assert!(limit.fits(&limit.assess(&agent.own.state)));
                    let d = jittered(&mut clocks.rngs[i], config.cost.t_su, config.jitter);
                    if changed {
                        last_change = (last_change.0.max(agent.iteration), now + d);
                    }
                    records.push(TraceRecord {
                        iteration: agent.iteration,
                        agent_id: agent.agent_id.0,
                        utility: agent.own.utility,
                        own_load_mw: agent.own_load(&limit),
                        msgs_sent: std::mem::take(&mut pending_sent[i]),
                        msgs_dropped: std::mem::take(&mut pending_dropped[i]),
                    });
                    clocks.phase[i] = Phase::Discover;
                    if agent.iteration >= *max_iterations {
                        clocks.remove(i);
                    } else {
                        clocks.set(i, now + d, step + gap);
                    }
                }
            }
            step += 1;
            let now_converged = flag(agents, *k, i);
            if now_converged != converged[i] {
                converged[i] = now_converged;
                if now_converged {
                    unconverged -= 1;
                } else {
                    unconverged += 1;
                }
            }
        };
        if !fault_due {
            break;
        }
        let (_, fault) = &faults[next_fault];
        next_fault += 1;
        engine.apply(fault)?;
        for (j, c) in converged.iter_mut().enumerate() {
            if !engine.agents[j].active {
                clocks.remove(j);
            }
            *c = flag(&engine.agents, engine.k, j);
        }
        unconverged = converged.iter().filter(|c| !**c).count();
    }

    let rounds = engine.agents.iter().map(|a| a.iteration).max().unwrap_or(0);
    let end = clocks.at.iter().copied().max().unwrap_or(0).max(now);
    Ok(RunTrace {
        mode: Mode::Async,
        seed: engine.seed,
        records: engine.records.clone(),
        rounds,
        convergence_iteration: last_change.0,
        converged: engine.all_converged(),
        simulated_ticks: end,
        deployment_ticks: last_change.1,
        agents: engine.final_agents()?,
        clamps: engine.world.clamps.clone(),
        command: engine.world.command,
        stats: engine.stats,
    })
}
