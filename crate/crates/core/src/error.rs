use thiserror::Error;

use crate::model::UserId;
use crate::units::Megawatts;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{what} must be finite, got {value}")]
    NotFinite { what: &'static str, value: f64 },
    #[error("{what} {value} is finer than the 0.01 resolution")]
    Resolution { what: &'static str, value: f64 },
    #[error("{what} {value} is out of range")]
    OutOfRange { what: &'static str, value: f64 },
    #[error("state vector has {got} coordinates, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("unknown user {0}")]
    UnknownUser(UserId),
    #[error("user {user}: {reason}")]
    InvalidUser { user: UserId, reason: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("capacity {capacity} is below the clamped load {clamped}")]
    Infeasible {
        capacity: Megawatts,
        clamped: Megawatts,
    },
    #[error("{count} sectors exceed the enumeration limit of {max}")]
    TooManySectors { count: usize, max: usize },
    #[error("knapsack table of {cells} cells exceeds the limit of {limit}")]
    TableTooLarge { cells: u128, limit: u128 },
    #[error("user {0} is clamped and cannot be re-optimized")]
    ClampedUser(UserId),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("message is {got} bytes, expected {expected}")]
    Length { expected: usize, got: usize },
    #[error("nonzero padding bits after coordinate {n_total}")]
    Padding { n_total: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("agent {0} has no feasible state: capacity is below the clamped load")]
    NoFeasibleState(UserId),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Problems found while loading or checking a scenario.
#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid scenario: {}", .0.join("; "))]
    Invalid(Vec<String>),
    #[error("fault references unknown {0}")]
    UnknownEntity(String),
    #[error("unknown bundled scenario {0:?}")]
    UnknownBundled(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ScenarioError {
    pub(crate) fn from_json(err: serde_json::Error) -> Self {
        ScenarioError::Parse {
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("setup: {0}")]
    Setup(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("trace export: {0}")]
    Export(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OperatorError {
    #[error("required reduction {required} exceeds running load {running}")]
    ReductionExceedsLoad {
        running: Megawatts,
        required: Megawatts,
    },
    #[error("negative quantity: {0}")]
    Negative(&'static str),
    #[error("zero or negative denominator: {0}")]
    Arithmetic(&'static str),
    #[error("cannot generate topology: {0}")]
    Generation(String),
    #[error("command sequence times must be strictly increasing")]
    UnorderedSequence,
}
