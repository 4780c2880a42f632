//! Scenario files: users, topology, operator command, fault schedule.
//!
//! ```json
//! {
//!   "users": [{"id": 1, "sectors": [{"baseline_mw": 20, "weight": 2}]}],
//!   "topology": {"edges": [[1, 2]]},
//!   "command": {"running_load_mw": 90, "required_reduction_mw": 30,
//!               "incentive_rate_dollars_per_mwh": 500, "duration_h": 1},
//!   "faults": [{"at_iteration": 5, "kind": "link_loss", "edge": [1, 2]}],
//!   "seed": 7,
//!   "max_iterations": 10
//! }
//! ```
//!
//! The command gives either `running_load_mw` (capacity is running load
//! minus the required reduction) or `capacity_mw` directly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::ScenarioError;
use crate::model::{Coalition, OperatorCommand, UserId, UserLoad};
use crate::simnet::fault::FaultEvent;
use crate::simnet::topology::{Topology, TopologyFile};
use crate::units::Megawatts;

const THREE_AGENT: &str = include_str!("../scenarios/three-agent.json");
const IEEE14: &str = include_str!("../scenarios/ieee14.json");

/// Names accepted by [`Scenario::bundled`].
pub const BUNDLED: [&str; 2] = ["three-agent", "ieee14"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub running_load_mw: Option<Megawatts>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity_mw: Option<Megawatts>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub required_reduction_mw: Option<Megawatts>,
    pub incentive_rate_dollars_per_mwh: f64,
    pub duration_h: f64,
}

/// A command resolved to capacity and required reduction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedCommand {
    pub command: OperatorCommand,
    pub running_load: Megawatts,
    pub required_reduction: Megawatts,
}

impl CommandSpec {
    /// Without an explicit running load the coalition's total baseline is used.
    pub fn resolve(&self, total_baseline: Megawatts) -> Result<ResolvedCommand, Vec<String>> {
        let mut problems = Vec::new();
        let rate = self.incentive_rate_dollars_per_mwh;
        if !(rate.is_finite() && rate >= 0.0) {
            problems.push(format!(
                "command: incentive rate {rate} must be finite and >= 0"
            ));
        }
        if !(self.duration_h.is_finite() && self.duration_h > 0.0) {
            problems.push(format!(
                "command: duration_h {} must be > 0",
                self.duration_h
            ));
        }
        for (what, v) in [
            ("running_load_mw", self.running_load_mw),
            ("capacity_mw", self.capacity_mw),
            ("required_reduction_mw", self.required_reduction_mw),
        ] {
            if v.is_some_and(|v| v.is_negative()) {
                problems.push(format!("command: {what} must be >= 0"));
            }
        }
        let running = self.running_load_mw.unwrap_or(total_baseline);
        let (capacity, required) = match (self.capacity_mw, self.required_reduction_mw) {
            (Some(c), Some(r)) => {
                if self.running_load_mw.is_some() && running - r != c {
                    problems.push(format!(
                        "command: capacity {c} disagrees with running load {running} minus reduction {r}"
                    ));
                }
                (c, r)
            }
            (Some(c), None) => (c, Megawatts::from_centi((running - c).centi().max(0))),
            (None, Some(r)) => {
                if r > running {
                    problems.push(format!(
                        "command: required reduction {r} exceeds running load {running}"
                    ));
                }
                (running - r, r)
            }
            (None, None) => {
                problems.push("command: needs capacity_mw or required_reduction_mw".into());
                (running, Megawatts::from_centi(0))
            }
        };
        if problems.is_empty() {
            Ok(ResolvedCommand {
                command: OperatorCommand::new(capacity, rate, self.duration_h),
                running_load: running,
                required_reduction: required,
            })
        } else {
            Err(problems)
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    users: Vec<UserLoad>,
    topology: TopologyFile,
    command: CommandSpec,
    #[serde(default)]
    faults: Vec<FaultEvent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    max_iterations: u32,
}

/// A validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: Option<String>,
    pub coalition: Coalition,
    pub topology: Topology,
    pub command_spec: CommandSpec,
    pub resolved: ResolvedCommand,
    pub faults: Vec<FaultEvent>,
    pub seed: Option<u64>,
    pub max_iterations: u32,
}

impl Scenario {
    pub fn new(
        users: Vec<UserLoad>,
        edges: Vec<[u32; 2]>,
        command: CommandSpec,
        faults: Vec<FaultEvent>,
        seed: Option<u64>,
        max_iterations: u32,
    ) -> Result<Self, ScenarioError> {
        from_file(ScenarioFile {
            name: None,
            users,
            topology: TopologyFile { edges },
            command,
            faults,
            seed,
            max_iterations,
        })
    }

    pub fn from_json_str(text: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = serde_json::from_str(text).map_err(ScenarioError::from_json)?;
        from_file(file)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        Scenario::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// One of the scenarios shipped with the crate, by name with or without
    /// the `.json` suffix.
    pub fn bundled(name: &str) -> Result<Self, ScenarioError> {
        let text = match name.strip_suffix(".json").unwrap_or(name) {
            "three-agent" => THREE_AGENT,
            "ieee14" => IEEE14,
            _ => return Err(ScenarioError::UnknownBundled(name.to_string())),
        };
        Scenario::from_json_str(text)
    }

    pub fn to_json_string(&self) -> String {
        let file = ScenarioFile {
            name: self.name.clone(),
            users: self.coalition.users().to_vec(),
            topology: TopologyFile::from(&self.topology),
            command: self.command_spec.clone(),
            faults: self.faults.clone(),
            seed: self.seed,
            max_iterations: self.max_iterations,
        };
        let mut text = serde_json::to_string_pretty(&file).expect("scenario serializes");
        text.push('\n');
        text
    }

    /// Appends faults after checking them against the scenario.
    pub fn with_faults(mut self, faults: Vec<FaultEvent>) -> Result<Self, ScenarioError> {
        let problems: Vec<String> = faults
            .iter()
            .flat_map(|f| f.problems(&self.coalition, &self.topology))
            .collect();
        if !problems.is_empty() {
            return Err(ScenarioError::Invalid(problems));
        }
        self.faults.extend(faults);
        Ok(self)
    }

    pub fn command(&self) -> OperatorCommand {
        self.resolved.command
    }

    pub fn required_reduction(&self) -> Megawatts {
        self.resolved.required_reduction
    }
}

fn from_file(file: ScenarioFile) -> Result<Scenario, ScenarioError> {
    let mut problems = Vec::new();
    if file.max_iterations == 0 {
        problems.push("max_iterations must be positive".to_string());
    }
    if file.users.is_empty() {
        problems.push("scenario has no users".to_string());
    }
    let coalition = match Coalition::new(file.users) {
        Ok(c) => Some(c),
        Err(e) => {
            problems.push(e.to_string());
            None
        }
    };

    let mut seen = std::collections::BTreeSet::new();
    let mut edges = Vec::new();
    for &[a, b] in &file.topology.edges {
        let known = |v: u32| {
            coalition
                .as_ref()
                .is_none_or(|c| c.index_of(UserId(v)).is_some())
        };
        if a == b {
            problems.push(format!("topology: self-loop on {a}"));
        } else if !known(a) || !known(b) {
            problems.push(format!("topology: edge {a}-{b} references an unknown user"));
        } else if !seen.insert((a.min(b), a.max(b))) {
            problems.push(format!("topology: duplicate edge {a}-{b}"));
        } else {
            edges.push((UserId(a), UserId(b)));
        }
    }

    let Some(coalition) = coalition else {
        return Err(ScenarioError::Invalid(problems));
    };
    let topology = Topology::new(coalition.users().iter().map(|u| u.user_id), edges)
        .expect("edges were checked above");
    let resolved = match file.command.resolve(coalition.total_baseline()) {
        Ok(r) => Some(r),
        Err(p) => {
            problems.extend(p);
            None
        }
    };
    for fault in &file.faults {
        problems.extend(fault.problems(&coalition, &topology));
    }
    match resolved {
        Some(resolved) if problems.is_empty() => Ok(Scenario {
            name: file.name,
            coalition,
            topology,
            command_spec: file.command,
            resolved,
            faults: file.faults,
            seed: file.seed,
            max_iterations: file.max_iterations,
        }),
        _ => Err(ScenarioError::Invalid(problems)),
    }
}
