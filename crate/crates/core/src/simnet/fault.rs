use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ScenarioError;
use crate::model::{Clamps, Coalition, OperatorCommand, UserId};
use crate::simnet::topology::Topology;
use crate::units::Megawatts;

/// Something that happens to the network or the command mid-run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FaultKind {
    LinkLoss { edge: [u32; 2] },
    LoadDisconnect { user: UserId, clamp_mw: Megawatts },
    AgentLoss { agent: UserId },
    PacketLossRate { p: f64 },
    MeanDelayMs { ms: f64 },
    CapacityChange { capacity_mw: Megawatts },
    IncentiveChange { rate: f64 },
}

impl fmt::Display for FaultKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FaultKind::LinkLoss { edge } => write!(f, "link_loss:{}-{}", edge[0], edge[1]),
            FaultKind::LoadDisconnect { user, clamp_mw } => {
                write!(f, "load_disconnect:{user}={}", clamp_mw.as_f64())
            }
            FaultKind::AgentLoss { agent } => write!(f, "agent_loss:{agent}"),
            FaultKind::PacketLossRate { p } => write!(f, "packet_loss_rate:{p}"),
            FaultKind::MeanDelayMs { ms } => write!(f, "mean_delay_ms:{ms}"),
            FaultKind::CapacityChange { capacity_mw } => {
                write!(f, "capacity_change:{}", capacity_mw.as_f64())
            }
            FaultKind::IncentiveChange { rate } => write!(f, "incentive_change:{rate}"),
        }
    }
}

/// Parses the compact form written by `Display`, e.g. `link_loss:9-14`,
/// `load_disconnect:10=100` or `packet_loss_rate:0.2`.
impl FromStr for FaultKind {
    type Err = String;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let (kind, args) = text
            .split_once(':')
            .ok_or_else(|| format!("fault {text:?} lacks ':' before its arguments"))?;
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| format!("fault {text:?}: {s:?} is not a number"))
        };
        let id = |s: &str| {
            s.trim()
                .parse::<u32>()
                .map_err(|_| format!("fault {text:?}: {s:?} is not a user id"))
        };
        let megawatts =
            |s: &str| Megawatts::from_f64(num(s)?).map_err(|e| format!("fault {text:?}: {e}"));
        let pair = |sep: char| {
            args.split_once(sep)
                .ok_or_else(|| format!("fault {text:?}: expected two values separated by '{sep}'"))
        };
        Ok(match kind.trim() {
            "link_loss" => {
                let (a, b) = pair('-')?;
                FaultKind::LinkLoss {
                    edge: [id(a)?, id(b)?],
                }
            }
            "load_disconnect" => {
                let (u, mw) = pair('=')?;
                FaultKind::LoadDisconnect {
                    user: UserId(id(u)?),
                    clamp_mw: megawatts(mw)?,
                }
            }
            "agent_loss" => FaultKind::AgentLoss {
                agent: UserId(id(args)?),
            },
            "packet_loss_rate" => FaultKind::PacketLossRate { p: num(args)? },
            "mean_delay_ms" => FaultKind::MeanDelayMs { ms: num(args)? },
            "capacity_change" => FaultKind::CapacityChange {
                capacity_mw: megawatts(args)?,
            },
            "incentive_change" => FaultKind::IncentiveChange { rate: num(args)? },
            other => return Err(format!("unknown fault kind {other:?}")),
        })
    }
}

/// A fault with its trigger. In synchronous mode `at_iteration = k` fires
/// after round `k` completes; asynchronous runs use `at_time_ms`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultEvent {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at_iteration: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at_time_ms: Option<f64>,
    #[serde(flatten)]
    pub kind: FaultKind,
}

impl FaultEvent {
    pub fn at_iteration(k: u32, kind: FaultKind) -> Self {
        FaultEvent {
            at_iteration: Some(k),
            at_time_ms: None,
            kind,
        }
    }

    pub fn at_time_ms(t: f64, kind: FaultKind) -> Self {
        FaultEvent {
            at_iteration: None,
            at_time_ms: Some(t),
            kind,
        }
    }

    /// Static checks against the initial scenario; returns every problem found.
    pub fn problems(&self, coalition: &Coalition, topology: &Topology) -> Vec<String> {
        let mut out = Vec::new();
        let known = |u: UserId| coalition.index_of(u).is_some();
        match (self.at_iteration, self.at_time_ms) {
            (None, None) => out.push(format!(
                "fault {}: needs at_iteration or at_time_ms",
                self.kind
            )),
            (_, Some(t)) if !(t.is_finite() && t >= 0.0) => out.push(format!(
                "fault {}: at_time_ms must be finite and >= 0",
                self.kind
            )),
            _ => {}
        }
        match &self.kind {
            FaultKind::LinkLoss { edge } => {
                if !topology.contains(UserId(edge[0]), UserId(edge[1])) {
                    out.push(format!("fault {}: no such edge", self.kind));
                }
            }
            FaultKind::LoadDisconnect { user, clamp_mw } => {
                if !known(*user) {
                    out.push(format!("fault {}: unknown user {user}", self.kind));
                }
                if clamp_mw.is_negative() {
                    out.push(format!("fault {}: clamp_mw must be >= 0", self.kind));
                }
            }
            FaultKind::AgentLoss { agent } => {
                if !known(*agent) {
                    out.push(format!("fault {}: unknown agent {agent}", self.kind));
                }
            }
            FaultKind::PacketLossRate { p } => {
                if !(0.0..=1.0).contains(p) {
                    out.push(format!("fault {}: p must lie in [0, 1]", self.kind));
                }
            }
            FaultKind::MeanDelayMs { ms } => {
                if !(ms.is_finite() && *ms >= 0.0) {
                    out.push(format!(
                        "fault {}: delay must be finite and >= 0",
                        self.kind
                    ));
                }
            }
            FaultKind::CapacityChange { capacity_mw } => {
                if capacity_mw.is_negative() {
                    out.push(format!("fault {}: capacity must be >= 0", self.kind));
                }
            }
            FaultKind::IncentiveChange { rate } => {
                if !(rate.is_finite() && *rate >= 0.0) {
                    out.push(format!("fault {}: rate must be finite and >= 0", self.kind));
                }
            }
        }
        out
    }
}

/// Everything a fault can change.
#[derive(Debug, Clone)]
pub struct World {
    pub coalition: Coalition,
    pub topology: Topology,
    pub clamps: Clamps,
    pub command: OperatorCommand,
    pub active: BTreeSet<UserId>,
    pub packet_loss: f64,
    pub mean_delay_ms: f64,
}

/// What the simulator has to propagate to the agents after a fault.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FaultEffect {
    LinkRemoved(UserId, UserId),
    Clamped(UserId),
    AgentLost { agent: UserId, former: Vec<UserId> },
    Network,
    Command,
}

impl World {
    pub fn new(coalition: Coalition, topology: Topology, command: OperatorCommand) -> Self {
        let active = coalition.users().iter().map(|u| u.user_id).collect();
        World {
            coalition,
            topology,
            clamps: Clamps::new(),
            command,
            active,
            packet_loss: 0.0,
            mean_delay_ms: 0.0,
        }
    }

    fn check_user(&self, u: UserId) -> Result<usize, ScenarioError> {
        self.coalition
            .index_of(u)
            .ok_or_else(|| ScenarioError::UnknownEntity(format!("user {u}")))
    }
}

/// Applies one fault in place.
pub fn apply_fault(world: &mut World, fault: &FaultKind) -> Result<FaultEffect, ScenarioError> {
    match *fault {
        FaultKind::LinkLoss { edge: [a, b] } => {
            let (a, b) = (UserId(a), UserId(b));
            world
                .topology
                .remove_edge(a, b)
                .map_err(|_| ScenarioError::UnknownEntity(format!("edge {a}-{b}")))?;
            Ok(FaultEffect::LinkRemoved(a, b))
        }
        FaultKind::LoadDisconnect { user, clamp_mw } => {
            world.check_user(user)?;
            if clamp_mw.is_negative() {
                return Err(ScenarioError::Invalid(vec![format!(
                    "negative clamp for user {user}"
                )]));
            }
            world.clamps.insert(user, clamp_mw);
            Ok(FaultEffect::Clamped(user))
        }
        FaultKind::AgentLoss { agent } => {
            let idx = world.check_user(agent)?;
            if !world.active.remove(&agent) {
                return Err(ScenarioError::UnknownEntity(format!(
                    "active agent {agent}"
                )));
            }
            let former = world.topology.isolate(agent);
            let baseline = world.coalition.user_baseline(idx);
            world.clamps.entry(agent).or_insert(baseline);
            Ok(FaultEffect::AgentLost { agent, former })
        }
        FaultKind::PacketLossRate { p } => {
            if !(0.0..=1.0).contains(&p) {
                return Err(ScenarioError::Invalid(vec![format!(
                    "packet loss {p} outside [0, 1]"
                )]));
            }
            world.packet_loss = p;
            Ok(FaultEffect::Network)
        }
        FaultKind::MeanDelayMs { ms } => {
            if !(ms.is_finite() && ms >= 0.0) {
                return Err(ScenarioError::Invalid(vec![format!(
                    "mean delay {ms} is invalid"
                )]));
            }
            world.mean_delay_ms = ms;
            Ok(FaultEffect::Network)
        }
        FaultKind::CapacityChange { capacity_mw } => {
            world.command.capacity_mw = capacity_mw;
            Ok(FaultEffect::Command)
        }
        FaultKind::IncentiveChange { rate } => {
            world.command.incentive_rate = rate;
            Ok(FaultEffect::Command)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::ieee14;
    use crate::simnet::topology::fixtures::ieee14 as ieee14_topology;

    fn world() -> World {
        World::new(
            ieee14(),
            ieee14_topology(),
            OperatorCommand::new(Megawatts::from_whole(620), 500.0, 1.0),
        )
    }

    #[test]
    fn json_shape() {
        let f: FaultEvent =
            serde_json::from_str(r#"{"at_iteration": 5, "kind": "link_loss", "edge": [9, 14]}"#)
                .unwrap();
        assert_eq!(
            f,
            FaultEvent::at_iteration(5, FaultKind::LinkLoss { edge: [9, 14] })
        );
        let back = serde_json::to_value(&f).unwrap();
        assert_eq!(back["kind"], "link_loss");
        let d: FaultEvent = serde_json::from_str(
            r#"{"at_time_ms": 12.5, "kind": "load_disconnect", "user": 10, "clamp_mw": 100}"#,
        )
        .unwrap();
        assert_eq!(d.at_time_ms, Some(12.5));
    }

    #[test]
    fn link_loss_removes_both_directions() {
        let mut w = world();
        let eff = apply_fault(&mut w, &FaultKind::LinkLoss { edge: [14, 9] }).unwrap();
        assert_eq!(eff, FaultEffect::LinkRemoved(UserId(14), UserId(9)));
        assert!(!w.topology.neighbors(UserId(9)).any(|u| u == UserId(14)));
        assert!(!w.topology.neighbors(UserId(14)).any(|u| u == UserId(9)));
    }

    #[test]
    fn missing_edge_is_a_scenario_error() {
        let mut w = world();
        let err = apply_fault(&mut w, &FaultKind::LinkLoss { edge: [1, 14] }).unwrap_err();
        assert!(matches!(err, ScenarioError::UnknownEntity(_)));
    }

    #[test]
    fn agent_loss_isolates_and_clamps_at_baseline() {
        let mut w = world();
        let eff = apply_fault(&mut w, &FaultKind::AgentLoss { agent: UserId(10) }).unwrap();
        assert_eq!(
            eff,
            FaultEffect::AgentLost {
                agent: UserId(10),
                former: vec![UserId(9), UserId(11)]
            }
        );
        assert_eq!(w.clamps[&UserId(10)], Megawatts::from_whole(100));
        assert!(!w.active.contains(&UserId(10)));
        assert!(apply_fault(&mut w, &FaultKind::AgentLoss { agent: UserId(10) }).is_err());
    }

    #[test]
    fn static_problems_are_collected() {
        let w = world();
        let bad = FaultEvent {
            at_iteration: None,
            at_time_ms: None,
            kind: FaultKind::PacketLossRate { p: 1.5 },
        };
        assert_eq!(bad.problems(&w.coalition, &w.topology).len(), 2);
        let ok = FaultEvent::at_iteration(
            5,
            FaultKind::LoadDisconnect {
                user: UserId(10),
                clamp_mw: Megawatts::from_whole(100),
            },
        );
        assert!(ok.problems(&w.coalition, &w.topology).is_empty());
        let unknown = FaultEvent::at_iteration(1, FaultKind::AgentLoss { agent: UserId(99) });
        assert_eq!(unknown.problems(&w.coalition, &w.topology).len(), 1);
    }

    #[test]
    fn compact_form_round_trips() {
        let kinds = [
            FaultKind::LinkLoss { edge: [9, 14] },
            FaultKind::LoadDisconnect {
                user: UserId(10),
                clamp_mw: Megawatts::from_whole(100),
            },
            FaultKind::AgentLoss { agent: UserId(10) },
            FaultKind::PacketLossRate { p: 0.45 },
            FaultKind::MeanDelayMs { ms: 1.5 },
            FaultKind::CapacityChange {
                capacity_mw: Megawatts::from_centi(60_050),
            },
            FaultKind::IncentiveChange { rate: 93.75 },
        ];
        for k in kinds {
            assert_eq!(k.to_string().parse::<FaultKind>(), Ok(k.clone()), "{k}");
        }
        assert!("link_loss:9".parse::<FaultKind>().is_err());
        assert!("melt:1".parse::<FaultKind>().is_err());
        assert!("agent_loss".parse::<FaultKind>().is_err());
        assert!("capacity_change:1.001".parse::<FaultKind>().is_err());
    }
}
