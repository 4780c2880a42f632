mod common;

use common::check_protocol;
use ddp_core::protocol::{AgentState, Ingest};
use ddp_core::scenario::Scenario;
use ddp_core::{CapacityConstraint, Clamps, Megawatts, StateVector, UserId};

#[test]
fn random_systems_reach_a_good_local_optimum() {
    let outcomes: Vec<_> = (0..200)
        .map(|seed| check_protocol(seed).unwrap_or_else(|e| panic!("{e}")))
        .collect();
    let good = outcomes.iter().filter(|o| o.within(0.9)).count();
    assert!(good >= 180, "only {good}/200 within 10% of the optimum");
}

#[test]
fn stale_and_foreign_messages_are_handled() {
    let scenario = Scenario::bundled("three-agent").unwrap();
    let clamps = Clamps::new();
    let limit =
        CapacityConstraint::new(&scenario.coalition, Megawatts::from_whole(60), &clamps).unwrap();
    let mut a = AgentState::init(UserId(1), [UserId(2)], &limit).unwrap();
    let mut msg = a.message();
    msg.sender_id = 3;
    assert_eq!(a.ingest(&msg, &limit), Ingest::NotNeighbor(UserId(3)));
    msg.sender_id = 2;
    msg.state = StateVector::all_off(3);
    assert!(matches!(a.ingest(&msg, &limit), Ingest::Malformed(_)));
    assert!(matches!(
        a.ingest_bytes(&[1, 2, 3], &limit),
        Ingest::Malformed(_)
    ));
    assert_eq!(a.dropped, 3);
    // A lying utility field is ignored in favour of the state.
    msg.state = StateVector::parse("0 (0 1) 1").unwrap();
    msg.utility = 1e9;
    assert_eq!(a.ingest(&msg, &limit), Ingest::Accepted);
    assert_eq!(a.neighbors[&UserId(2)].estimate.utility.as_f64(), 220.0);
}
