//! System-operator side: capacity commands, incentive rates, payments, the
//! distributed-versus-centralized performance index, random test systems and
//! time-varying command sequences.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::Serialize;

use crate::error::{OperatorError, SimError};
use crate::model::{Coalition, LoadSector, OperatorCommand, StateVector, UserId, UserLoad};
use crate::scenario::{CommandSpec, Scenario};
use crate::simnet::config::{stream_rng, ticks_to_ms, SimConfig, GENERATOR_STREAM};
use crate::simnet::sync::Simulation;
use crate::simnet::topology::Topology;
use crate::simnet::trace::RunTrace;
use crate::units::{Megawatts, Weight};

/// Capacity left to the coalition after the required reduction.
pub fn compute_capacity(
    running_load: Megawatts,
    required_reduction: Megawatts,
) -> Result<Megawatts, OperatorError> {
    if running_load.is_negative() {
        return Err(OperatorError::Negative("running load"));
    }
    if required_reduction.is_negative() {
        return Err(OperatorError::Negative("required reduction"));
    }
    if required_reduction > running_load {
        return Err(OperatorError::ReductionExceedsLoad {
            running: running_load,
            required: required_reduction,
        });
    }
    Ok(running_load - required_reduction)
}

/// Incentive rate in $/MWh as a function of the requested reduction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum IncentiveSchedule {
    Static {
        rate: f64,
    },
    /// `trigger_rate + slope * max(0, reduction - threshold_mw)`.
    Dynamic {
        trigger_rate: f64,
        slope: f64,
        threshold_mw: f64,
    },
}

impl IncentiveSchedule {
    pub const fn dynamic_default() -> Self {
        IncentiveSchedule::Dynamic {
            trigger_rate: 75.0,
            slope: 0.15,
            threshold_mw: 75.0,
        }
    }
}

pub fn dynamic_rate(schedule: &IncentiveSchedule, reduction_mw: f64) -> f64 {
    match *schedule {
        IncentiveSchedule::Static { rate } => rate,
        IncentiveSchedule::Dynamic {
            trigger_rate,
            slope,
            threshold_mw,
        } => trigger_rate + slope * (reduction_mw - threshold_mw).max(0.0),
    }
}

/// Dollars earned for `reduction_mw` held for `duration_h` at `rate` $/MWh.
pub fn settle_payment(rate: f64, reduction_mw: f64, duration_h: f64) -> f64 {
    debug_assert!(rate >= 0.0 && reduction_mw >= 0.0 && duration_h >= 0.0);
    rate * reduction_mw * duration_h
}

/// Utility of one user including the incentive term: weighted on-load minus
/// `rate` times on-load. `state` is the coalition-wide vector.
pub fn net_user_utility(
    coalition: &Coalition,
    state: &StateVector,
    user: UserId,
    rate: f64,
) -> f64 {
    let Some(idx) = coalition.index_of(user) else {
        return 0.0;
    };
    let u = coalition.user_at(idx);
    coalition
        .block(idx)
        .zip(&u.sectors)
        .filter(|(k, _)| state.get(*k))
        .map(|(_, s)| s.utility().as_f64() - rate * s.baseline_mw.as_f64())
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerfRecord {
    pub f_d: f64,
    pub f_g: f64,
    pub t_d: f64,
    pub t_g: f64,
    pub i_p: f64,
}

/// `(f_d / f_g) * (t_g / t_d)`: utility ratio times speed-up.
pub fn performance_index(
    f_d: f64,
    f_g: f64,
    t_d: f64,
    t_g: f64,
) -> Result<PerfRecord, OperatorError> {
    if f_g == 0.0 {
        return Err(OperatorError::Arithmetic("centralized utility is zero"));
    }
    if t_d == 0.0 {
        return Err(OperatorError::Arithmetic("distributed time is zero"));
    }
    Ok(PerfRecord {
        f_d,
        f_g,
        t_d,
        t_g,
        i_p: (f_d / f_g) * (t_g / t_d),
    })
}

/// Distribution of user loads for generated systems.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadProfile {
    pub sectors: (usize, usize),
    /// Baselines are drawn uniformly from `min..=max` in steps of `step`.
    pub baseline_mw: (i64, i64),
    pub baseline_step_mw: i64,
    /// One weight per user, drawn uniformly from this set.
    pub weights: Vec<i64>,
    /// Required reduction as a fraction of the total baseline.
    pub reduction_fraction: f64,
    pub incentive_rate: f64,
    pub duration_h: f64,
    pub max_iterations: u32,
}

impl Default for LoadProfile {
    fn default() -> Self {
        LoadProfile {
            sectors: (1, 3),
            baseline_mw: (10, 150),
            baseline_step_mw: 5,
            weights: vec![1, 10, 20],
            reduction_fraction: 0.05,
            incentive_rate: 750.0,
            duration_h: 1.0,
            max_iterations: 10_000,
        }
    }
}

/// Builds a random connected system with about `n * links_per_agent` links:
/// a random recursive spanning tree plus uniformly drawn extra edges.
pub fn generate_system(
    n: usize,
    links_per_agent: f64,
    profile: &LoadProfile,
    seed: u64,
) -> Result<Scenario, OperatorError> {
    let fail = |m: String| Err(OperatorError::Generation(m));
    if n < 2 {
        return fail(format!("need at least 2 agents, got {n}"));
    }
    if !links_per_agent.is_finite() {
        return fail("links per agent must be finite".into());
    }
    let max_edges = n * (n - 1) / 2;
    let target = (links_per_agent * n as f64).round().max(0.0) as usize;
    if target < n - 1 || target > max_edges {
        return fail(format!(
            "{links_per_agent} links per agent needs {target} links; a connected graph on {n} vertices has {} to {max_edges}",
            n - 1
        ));
    }
    if (target as f64 / n as f64 - links_per_agent).abs() > 0.05 {
        return fail(format!(
            "{links_per_agent} links per agent is not attainable on {n} vertices"
        ));
    }
    let (lo, hi) = profile.sectors;
    let (bmin, bmax) = profile.baseline_mw;
    if lo > hi
        || bmin <= 0
        || bmin > bmax
        || profile.baseline_step_mw <= 0
        || profile.weights.is_empty()
    {
        return fail("load profile is malformed".into());
    }
    if !(0.0..=1.0).contains(&profile.reduction_fraction) {
        return fail("reduction fraction must lie in [0, 1]".into());
    }

    let mut rng = stream_rng(seed, GENERATOR_STREAM);
    let mut edges = BTreeSet::new();
    for v in 1..n {
        let u = rng.random_range(0..v);
        edges.insert((u, v));
    }
    while edges.len() < target {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b {
            edges.insert((a.min(b), a.max(b)));
        }
    }

    let steps = (bmax - bmin) / profile.baseline_step_mw;
    let users: Vec<UserLoad> = (0..n)
        .map(|i| {
            let count = rng.random_range(lo..=hi);
            let w = *profile.weights.choose(&mut rng).expect("nonempty");
            let sectors = (0..count)
                .map(|_| {
                    let mw = bmin + profile.baseline_step_mw * rng.random_range(0..=steps);
                    LoadSector::new(Megawatts::from_whole(mw), Weight::from_whole(w))
                })
                .collect();
            UserLoad::new(i as u32 + 1, sectors)
        })
        .collect();
    let total: i64 = users.iter().map(|u| u.baseline().centi()).sum();
    let required =
        Megawatts::from_centi((total as f64 * profile.reduction_fraction).round() as i64);

    let command = CommandSpec {
        running_load_mw: Some(Megawatts::from_centi(total)),
        capacity_mw: None,
        required_reduction_mw: Some(required),
        incentive_rate_dollars_per_mwh: profile.incentive_rate,
        duration_h: profile.duration_h,
    };
    let edges = edges
        .into_iter()
        .map(|(a, b)| [a as u32 + 1, b as u32 + 1])
        .collect();
    let mut scenario = Scenario::new(
        users,
        edges,
        command,
        Vec::new(),
        Some(seed),
        profile.max_iterations,
    )
    .map_err(|e| OperatorError::Generation(e.to_string()))?;
    scenario.name = Some(format!("generated-{n}"));
    Ok(scenario)
}

/// Total reduction the users actually deploy: each user enacts its own block
/// of its own final estimate.
pub fn deployed_reduction(trace: &RunTrace) -> Megawatts {
    trace.deployed_reduction()
}

/// Deployed reduction per connected component of `topology`, each
/// component listed by its smallest user id.
pub fn reduction_by_component(trace: &RunTrace, topology: &Topology) -> Vec<(UserId, Megawatts)> {
    let reduction: BTreeMap<UserId, Megawatts> = trace
        .agents
        .iter()
        .map(|a| (a.agent_id, a.baseline_mw - a.own_load_mw))
        .collect();
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for root in topology.vertices() {
        if !seen.insert(root) {
            continue;
        }
        let mut stack = vec![root];
        let mut total = Megawatts::from_centi(0);
        while let Some(v) = stack.pop() {
            total += reduction.get(&v).copied().unwrap_or_default();
            for u in topology.neighbors(v) {
                if seen.insert(u) {
                    stack.push(u);
                }
            }
        }
        out.push((root, total));
    }
    out
}

/// Payment for a finished run: the run's rate on the deployed reduction,
/// capped at what was required.
pub fn run_payment(trace: &RunTrace, required: Megawatts) -> f64 {
    let paid = deployed_reduction(trace)
        .min(required)
        .max(Megawatts::from_centi(0));
    settle_payment(
        trace.command.incentive_rate,
        paid.as_f64(),
        trace.command.duration_h,
    )
}

/// Reduction requests over time against a fixed running load.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommandSequence {
    pub running_load_mw: Megawatts,
    /// `(start hour, required reduction)` pairs.
    pub steps: Vec<(f64, Megawatts)>,
    /// Duration of the final step; earlier steps last until the next one.
    pub last_duration_h: f64,
}

impl CommandSequence {
    pub fn new(
        running_load_mw: Megawatts,
        steps: Vec<(f64, Megawatts)>,
        last_duration_h: f64,
    ) -> Result<Self, OperatorError> {
        if steps.windows(2).any(|w| w[0].0 >= w[1].0) || steps.iter().any(|s| !s.0.is_finite()) {
            return Err(OperatorError::UnorderedSequence);
        }
        if last_duration_h.is_nan() || last_duration_h <= 0.0 {
            return Err(OperatorError::Negative("final step duration"));
        }
        for &(_, r) in &steps {
            compute_capacity(running_load_mw, r)?;
        }
        Ok(CommandSequence {
            running_load_mw,
            steps,
            last_duration_h,
        })
    }

    fn duration(&self, i: usize) -> f64 {
        match self.steps.get(i + 1) {
            Some(next) => next.0 - self.steps[i].0,
            None => self.last_duration_h,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SequenceStep {
    pub time_h: f64,
    pub required_reduction_mw: Megawatts,
    pub incentive_rate: f64,
    pub utility: Option<f64>,
    pub deployed_reduction_mw: Megawatts,
    pub payment: f64,
    /// Rounds from the broadcast until the last estimate change.
    pub rounds: u32,
    /// Simulated time from the broadcast until the last estimate change.
    pub tracking_latency_ms: f64,
}

/// Re-commands a running synchronous simulation for each step and lets it
/// settle; agents keep their states between steps.
pub fn run_command_sequence(
    scenario: &Scenario,
    sequence: &CommandSequence,
    schedule: &IncentiveSchedule,
    config: &SimConfig,
) -> Result<Vec<SequenceStep>, SimError> {
    let mut sim = Simulation::new(scenario, config)?;
    let budget = config.max_iterations.unwrap_or(scenario.max_iterations);
    let mut out = Vec::with_capacity(sequence.steps.len());
    for (i, &(time_h, required)) in sequence.steps.iter().enumerate() {
        let capacity = compute_capacity(sequence.running_load_mw, required)
            .map_err(|e| SimError::Setup(e.to_string()))?;
        let rate = dynamic_rate(schedule, required.as_f64());
        let duration = sequence.duration(i);
        sim.apply_command(OperatorCommand::new(capacity, rate, duration))?;
        let start = sim.round();
        sim.run_for(budget)?;
        let trace = sim.trace()?;
        let rounds = sim.last_change().saturating_sub(start);
        out.push(SequenceStep {
            time_h,
            required_reduction_mw: required,
            incentive_rate: rate,
            utility: trace.consensus_utility().map(|u| u.as_f64()),
            deployed_reduction_mw: deployed_reduction(&trace),
            payment: run_payment(&trace, required),
            rounds,
            tracking_latency_ms: ticks_to_ms(rounds as i64 * sim.round_ticks()),
        });
    }
    Ok(out)
}

/// Per-step CSV with columns `time, P_R, Ic, utility, payment, rounds`.
pub fn sequence_csv(steps: &[SequenceStep]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["time", "P_R", "Ic", "utility", "payment", "rounds"])
        .expect("in-memory write");
    for s in steps {
        w.write_record([
            s.time_h.to_string(),
            s.required_reduction_mw.as_f64().to_string(),
            s.incentive_rate.to_string(),
            s.utility.map(|u| u.to_string()).unwrap_or_default(),
            s.payment.to_string(),
            s.rounds.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

/// Machine-readable outcome of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub scenario: Option<String>,
    pub mode: crate::simnet::config::Mode,
    pub seed: u64,
    pub consensus: bool,
    pub consensus_utility: Option<f64>,
    pub consensus_state: Option<String>,
    pub converged: bool,
    pub convergence_iteration: u32,
    pub rounds: u32,
    pub simulated_time_ms: f64,
    pub deployment_time_ms: f64,
    pub capacity_mw: Megawatts,
    pub required_reduction_mw: Megawatts,
    pub deployed_reduction_mw: Megawatts,
    pub incentive_rate: f64,
    pub duration_h: f64,
    pub payment: f64,
    pub messages_sent: u64,
    pub messages_lost: u64,
    pub messages_rejected: u64,
    pub bytes_sent: u64,
}

impl RunSummary {
    pub fn new(scenario: &Scenario, trace: &RunTrace) -> Self {
        let consensus = trace.consensus();
        RunSummary {
            scenario: scenario.name.clone(),
            mode: trace.mode,
            seed: trace.seed,
            consensus: consensus.is_some(),
            consensus_utility: consensus.map(|a| a.utility.as_f64()),
            consensus_state: consensus.map(|a| a.state.to_string()),
            converged: trace.converged,
            convergence_iteration: trace.convergence_iteration,
            rounds: trace.rounds,
            simulated_time_ms: trace.simulated_time_ms(),
            deployment_time_ms: trace.deployment_time_ms(),
            capacity_mw: trace.command.capacity_mw,
            required_reduction_mw: scenario.required_reduction(),
            deployed_reduction_mw: deployed_reduction(trace),
            incentive_rate: trace.command.incentive_rate,
            duration_h: trace.command.duration_h,
            payment: run_payment(trace, scenario.required_reduction()),
            messages_sent: trace.stats.sent,
            messages_lost: trace.stats.lost,
            messages_rejected: trace.stats.rejected,
            bytes_sent: trace.stats.bytes,
        }
    }
}
