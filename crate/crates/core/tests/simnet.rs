mod common;

use std::collections::BTreeSet;

use common::{consensus_off_set, is_block_local_optimum};
use ddp_core::operator::run_payment;
use ddp_core::scenario::Scenario;
use ddp_core::simnet::{
    is_connected, run, run_asynchronous, run_synchronous, Edge, FaultEvent, FaultKind, SimConfig,
    Simulation,
};
use ddp_core::{solve_centralized, Clamps, Megawatts, StateVector, UserId, Utility};

fn mw(x: i64) -> Megawatts {
    Megawatts::from_whole(x)
}

fn with_faults(name: &str, faults: Vec<FaultEvent>) -> Scenario {
    let mut s = Scenario::bundled(name).unwrap();
    s.faults = faults;
    s
}

#[test]
fn three_agent_initialization_and_consensus() {
    let s = Scenario::bundled("three-agent").unwrap();
    let sim = Simulation::new(&s, &SimConfig::default()).unwrap();
    let init: Vec<(String, f64)> = sim
        .agents()
        .iter()
        .map(|a| (a.own.state.to_string(), a.own.utility.as_f64()))
        .collect();
    assert_eq!(
        init,
        vec![
            ("1000".into(), 40.0),
            ("0110".into(), 90.0),
            ("0001".into(), 160.0)
        ]
    );
    let trace = run_synchronous(&s, &SimConfig::default()).unwrap();
    let c = trace.consensus().unwrap();
    assert_eq!(c.utility, Utility::from_whole(220));
    assert_eq!(c.state, StateVector::parse("0 (0 1) 1").unwrap());
    assert!(trace.convergence_iteration <= 3);
}

#[test]
fn ieee14_consensus_and_payment() {
    let s = Scenario::bundled("ieee14").unwrap();
    let trace = run_synchronous(&s, &SimConfig::default()).unwrap();
    assert_eq!(trace.consensus_utility(), Some(Utility::from_whole(7120)));
    assert_eq!(consensus_off_set(&trace, &s), Some(vec![10, 14]));
    assert!(trace.convergence_iteration.abs_diff(14) <= 2);
    assert_eq!(trace.deployed_reduction(), mw(140));
    assert_eq!(run_payment(&trace, s.required_reduction()), 70_000.0);
}

#[test]
fn ieee14_link_loss() {
    let cut = |a, b| FaultEvent::at_iteration(5, FaultKind::LinkLoss { edge: [a, b] });
    let s = with_faults("ieee14", vec![cut(9, 14), cut(12, 13)]);
    let trace = run_synchronous(&s, &SimConfig::default()).unwrap();
    assert_eq!(trace.consensus_utility(), Some(Utility::from_whole(7120)));
    assert!((14..=17).contains(&trace.convergence_iteration));
    let removed: BTreeSet<Edge> = [(9, 14), (12, 13)]
        .into_iter()
        .map(|(a, b)| Edge::new(UserId(a), UserId(b)))
        .collect();
    let active = s.topology.vertices().collect();
    assert!(is_connected(&s.topology, &active, &removed));
}

#[test]
fn ieee14_load_disconnect() {
    let clamp = FaultKind::LoadDisconnect {
        user: UserId(10),
        clamp_mw: mw(100),
    };
    let s = with_faults("ieee14", vec![FaultEvent::at_iteration(5, clamp)]);
    let trace = run_synchronous(&s, &SimConfig::default()).unwrap();
    assert_eq!(trace.consensus_utility(), Some(Utility::from_whole(7000)));
    assert_eq!(consensus_off_set(&trace, &s), Some(vec![11, 14]));
    let clamps = Clamps::from([(UserId(10), mw(100))]);
    let oracle = solve_centralized(&s.coalition, s.command().capacity_mw, &clamps).unwrap();
    assert_eq!(oracle.utility, Utility::from_whole(7000));
}

#[test]
fn ieee14_agent_loss() {
    let lose = FaultKind::AgentLoss { agent: UserId(10) };
    let s = with_faults("ieee14", vec![FaultEvent::at_iteration(5, lose)]);
    let trace = run_synchronous(&s, &SimConfig::default()).unwrap();
    assert!(!trace.agent(UserId(10)).unwrap().active);
    assert_eq!(trace.consensus_utility(), Some(Utility::from_whole(7000)));
    assert_eq!(consensus_off_set(&trace, &s), Some(vec![11, 14]));
    let active = s.topology.vertices().filter(|&v| v != UserId(10)).collect();
    assert!(is_connected(&s.topology, &active, &BTreeSet::new()));
}

#[test]
fn packet_loss_keeps_the_three_agent_outcome() {
    let s = Scenario::bundled("three-agent").unwrap();
    let clean = run_synchronous(&s, &SimConfig::default()).unwrap();
    for seed in 0..20 {
        let config = SimConfig::default().with_seed(seed).with_packet_loss(0.45);
        let lossy = run(&s, &config.clone()).unwrap();
        assert_eq!(
            lossy.consensus().unwrap().state,
            clean.consensus().unwrap().state
        );
        assert!(lossy.rounds >= clean.rounds);
    }
}

/// Loss reorders information flow, so the search can settle in a different
/// local optimum; it never settles in an infeasible or improvable state.
#[test]
fn packet_loss_on_ieee14_still_reaches_a_local_optimum() {
    let s = Scenario::bundled("ieee14").unwrap();
    let capacity = s.command().capacity_mw;
    let clean = run_synchronous(&s, &SimConfig::default()).unwrap();
    let mut optimal = 0;
    for seed in 0..20 {
        let config = SimConfig::default().with_seed(seed).with_packet_loss(0.45);
        let lossy = run_synchronous(&s, &config).unwrap();
        let c = lossy.consensus().expect("consensus under loss");
        assert!(lossy.converged);
        assert!(lossy.rounds >= clean.rounds);
        assert!(lossy.stats.lost > 0);
        assert!(c.utility <= Utility::from_whole(7120));
        assert!(is_block_local_optimum(&s.coalition, &c.state, capacity, &Clamps::new()).unwrap());
        if c.utility == Utility::from_whole(7120) {
            optimal += 1;
        }
    }
    assert!(optimal >= 15, "{optimal}/20 seeds reached 7120");
}

#[test]
fn total_loss_freezes_every_agent() {
    let s = Scenario::bundled("ieee14").unwrap();
    let before = Simulation::new(&s, &SimConfig::default()).unwrap();
    let trace = run_synchronous(&s, &SimConfig::default().with_packet_loss(1.0)).unwrap();
    assert_eq!(trace.rounds, s.max_iterations);
    for (a, b) in trace.agents.iter().zip(before.agents()) {
        assert_eq!(a.utility, b.own.utility);
    }
}

#[test]
fn identical_seeds_give_identical_traces() {
    let s = Scenario::bundled("ieee14").unwrap();
    for config in [
        SimConfig::default().with_seed(5).with_packet_loss(0.3),
        SimConfig::asynchronous().with_seed(5).with_packet_loss(0.3),
    ] {
        let a = run(&s, &config).unwrap();
        let b = run(&s, &config).unwrap();
        assert_eq!(a.to_csv_string(), b.to_csv_string());
        assert_eq!(a, b);
    }
    let a = run(&s, &SimConfig::default().with_seed(1).with_packet_loss(0.3)).unwrap();
    let b = run(&s, &SimConfig::default().with_seed(2).with_packet_loss(0.3)).unwrap();
    assert_ne!(a.to_csv_string(), b.to_csv_string());
}

#[test]
fn synchronous_time_is_rounds_times_stage_costs() {
    for name in ["three-agent", "ieee14"] {
        let s = Scenario::bundled(name).unwrap();
        let trace = run_synchronous(&s, &SimConfig::default()).unwrap();
        assert_eq!(trace.simulated_time_ms(), trace.rounds as f64 * (3.0 + 1.0));
    }
}

#[test]
fn asynchronous_runs_reach_the_synchronous_utility() {
    let s = Scenario::bundled("ieee14").unwrap();
    for seed in 0..5 {
        let trace = run_asynchronous(&s, &SimConfig::asynchronous().with_seed(seed)).unwrap();
        assert!(trace.converged);
        assert_eq!(trace.consensus_utility(), Some(Utility::from_whole(7120)));
        assert!(trace.deployment_time_ms() <= trace.simulated_time_ms());
    }
}

#[test]
fn asynchronous_link_loss_by_time() {
    let cut = |a, b| FaultEvent::at_time_ms(20.0, FaultKind::LinkLoss { edge: [a, b] });
    let s = with_faults("ieee14", vec![cut(9, 14), cut(12, 13)]);
    let trace = run_asynchronous(&s, &SimConfig::asynchronous()).unwrap();
    assert_eq!(trace.consensus_utility(), Some(Utility::from_whole(7120)));
}

#[test]
fn faults_survive_a_scenario_file_round_trip() {
    let s = with_faults(
        "ieee14",
        vec![
            FaultEvent::at_iteration(5, FaultKind::LinkLoss { edge: [9, 14] }),
            FaultEvent::at_time_ms(
                12.5,
                FaultKind::LoadDisconnect {
                    user: UserId(10),
                    clamp_mw: mw(100),
                },
            ),
            FaultEvent::at_iteration(7, FaultKind::PacketLossRate { p: 0.1 }),
        ],
    );
    let back = Scenario::from_json_str(&s.to_json_string()).unwrap();
    assert_eq!(back.faults, s.faults);
    assert_eq!(back.coalition, s.coalition);
    assert_eq!(back.topology, s.topology);
}

#[test]
fn capacity_change_mid_run_is_tracked() {
    let change = FaultKind::CapacityChange {
        capacity_mw: mw(600),
    };
    let s = with_faults("ieee14", vec![FaultEvent::at_iteration(20, change)]);
    let trace = run_synchronous(&s, &SimConfig::default()).unwrap();
    let oracle = solve_centralized(&s.coalition, mw(600), &Clamps::new()).unwrap();
    let c = trace.consensus().unwrap();
    assert!(c.utility <= oracle.utility);
    assert!(trace.command.capacity_mw == mw(600));
    assert!(trace.convergence_iteration > 20);
}
