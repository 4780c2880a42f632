//! Random instances shared by the integration suites.

#![allow(dead_code)]

use ddp_core::operator::{generate_system, LoadProfile};
use ddp_core::scenario::Scenario;
use ddp_core::simnet::{RunTrace, SimConfig, Simulation};
use ddp_core::{
    local_block_optimize, solve_centralized, CapacityConstraint, Clamps, Coalition, LoadSector,
    Megawatts, SolverError, StateVector, UserId, UserLoad, Weight,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A knapsack instance: coalition, capacity and clamp set.
#[derive(Debug, Clone)]
pub struct Instance {
    pub coalition: Coalition,
    pub capacity: Megawatts,
    pub clamps: Clamps,
}

/// Up to `max_sectors` sectors over 1..=8 users, with baselines and weights
/// on the 0.01 grid and occasionally one clamped user.
pub fn random_instance(rng: &mut ChaCha8Rng, max_sectors: usize) -> Instance {
    let sectors = rng.random_range(1..=max_sectors);
    instance_with_sectors(rng, sectors)
}

pub fn instance_with_sectors(rng: &mut ChaCha8Rng, sectors: usize) -> Instance {
    let n_users = rng.random_range(1..=8usize);
    let mut counts = vec![0usize; n_users];
    for _ in 0..sectors {
        counts[rng.random_range(0..n_users)] += 1;
    }
    let mut users = Vec::new();
    for (i, &count) in counts.iter().enumerate() {
        let coarse = rng.random_bool(0.5);
        let sectors = (0..count)
            .map(|_| {
                let b = if coarse {
                    Megawatts::from_whole(rng.random_range(1..=150))
                } else {
                    Megawatts::from_centi(rng.random_range(1..=15_000))
                };
                LoadSector::new(b, Weight::from_centi(rng.random_range(0..=2_000)))
            })
            .collect();
        users.push(UserLoad::new(i as u32 + 1, sectors));
    }
    let coalition = Coalition::new(users).expect("generated users are valid");
    let mut clamps = Clamps::new();
    if rng.random_bool(0.2) {
        let id = rng.random_range(1..=n_users) as u32;
        clamps.insert(UserId(id), Megawatts::from_whole(rng.random_range(0..=50)));
    }
    let total = coalition.total_baseline().centi() + Coalition::clamped_total(&clamps).centi();
    let capacity = Megawatts::from_centi(rng.random_range(0..=total.max(1)));
    Instance {
        coalition,
        capacity,
        clamps,
    }
}

/// A connected generated system with `2..=max_n` agents and a random link
/// density.
pub fn random_system(rng: &mut ChaCha8Rng, max_n: usize) -> Scenario {
    let n = rng.random_range(2..=max_n);
    let lo = (n - 1) as f64 / n as f64;
    let hi = ((n - 1) as f64 / 2.0).clamp(lo, 2.0);
    let links = (rng.random_range(lo..=hi) * n as f64)
        .round()
        .max((n - 1) as f64);
    let profile = LoadProfile {
        reduction_fraction: rng.random_range(0.02..=0.2),
        ..LoadProfile::default()
    };
    generate_system(n, links / n as f64, &profile, rng.random()).expect("valid parameters")
}

/// User ids with at least one sector off in `state`.
pub fn off_users(coalition: &Coalition, state: &StateVector) -> Vec<u32> {
    (0..coalition.num_users())
        .filter(|&i| coalition.block(i).any(|k| !state.get(k)))
        .map(|i| coalition.user_at(i).user_id.0)
        .collect()
}

pub fn consensus_off_set(trace: &RunTrace, scenario: &Scenario) -> Option<Vec<u32>> {
    trace
        .consensus()
        .map(|a| off_users(&scenario.coalition, &a.state))
}

/// No single unclamped user can raise the utility of `state` by changing
/// only its own block.
pub fn is_block_local_optimum(
    coalition: &Coalition,
    state: &StateVector,
    capacity: Megawatts,
    clamps: &Clamps,
) -> Result<bool, SolverError> {
    let current = coalition.assess(state, clamps)?;
    for u in coalition.users() {
        if clamps.contains_key(&u.user_id) {
            continue;
        }
        if let Some(best) = local_block_optimize(state, u.user_id, coalition, capacity, clamps)? {
            if best.utility > current.utility {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

#[derive(Debug, Clone, Copy)]
pub struct ProtocolOutcome {
    pub utility: f64,
    pub optimum: f64,
}

impl ProtocolOutcome {
    pub fn within(&self, fraction: f64) -> bool {
        self.optimum == 0.0 || self.utility >= fraction * self.optimum
    }
}

/// Steps one random system to convergence and checks, every round, that no
/// agent's utility falls and every estimate stays feasible; then checks
/// consensus, per-block local optimality and the centralized bound.
pub fn check_protocol(seed: u64) -> Result<ProtocolOutcome, String> {
    let scenario = random_system(&mut rng(seed), 30);
    let mut sim = Simulation::new(&scenario, &SimConfig::default()).map_err(|e| e.to_string())?;
    let capacity = scenario.command().capacity_mw;
    let clamps = Clamps::new();
    let limit = CapacityConstraint::new(&scenario.coalition, capacity, &clamps)
        .map_err(|e| e.to_string())?;
    let mut previous: Vec<_> = sim.agents().iter().map(|a| a.own.utility).collect();
    while !sim.globally_converged() {
        if sim.round() >= scenario.max_iterations {
            return Err(format!("seed {seed}: no convergence"));
        }
        sim.step().map_err(|e| e.to_string())?;
        for (a, prev) in sim.agents().iter().zip(&mut previous) {
            let fresh = limit.assess(&a.own.state);
            if a.own.utility < *prev {
                return Err(format!("seed {seed}: utility of agent {} fell", a.agent_id));
            }
            if !limit.fits(&fresh) || fresh.utility != a.own.utility {
                return Err(format!(
                    "seed {seed}: agent {} holds an infeasible or misvalued estimate",
                    a.agent_id
                ));
            }
            *prev = a.own.utility;
        }
    }
    let trace = sim.trace().map_err(|e| e.to_string())?;
    let consensus = trace
        .consensus()
        .ok_or(format!("seed {seed}: no consensus"))?;
    if !is_block_local_optimum(&scenario.coalition, &consensus.state, capacity, &clamps)
        .map_err(|e| e.to_string())?
    {
        return Err(format!(
            "seed {seed}: consensus is not a per-block local optimum"
        ));
    }
    let opt =
        solve_centralized(&scenario.coalition, capacity, &clamps).map_err(|e| e.to_string())?;
    if consensus.utility > opt.utility {
        return Err(format!("seed {seed}: consensus beats the optimum"));
    }
    Ok(ProtocolOutcome {
        utility: consensus.utility.as_f64(),
        optimum: opt.utility.as_f64(),
    })
}
