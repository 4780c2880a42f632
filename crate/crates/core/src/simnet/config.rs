use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Simulated time is counted in ticks of 0.01 ms.
pub type Ticks = i64;
pub const TICKS_PER_MS: i64 = 100;

pub fn ms_to_ticks(ms: f64) -> Ticks {
    (ms * TICKS_PER_MS as f64).round() as Ticks
}

pub fn ticks_to_ms(t: Ticks) -> f64 {
    t as f64 / TICKS_PER_MS as f64
}

/// RNG stream for packet loss and latency.
pub const NETWORK_STREAM: u64 = 0;
/// RNG stream used by scenario generation.
pub const GENERATOR_STREAM: u64 = 1 << 63;

/// RNG stream for the agent at coalition position `idx`.
pub fn agent_stream(idx: usize) -> u64 {
    idx as u64 + 1
}

/// Every random draw comes from ChaCha8 keyed by the run seed, with one
/// stream per consumer so that adding draws in one place never shifts
/// another.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Sync,
    Async,
}

/// Per-stage processing cost of one agent round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CostModel {
    /// Information discovery (communication) time.
    pub t_id: Ticks,
    /// State update (computation) time.
    pub t_su: Ticks,
}

impl CostModel {
    pub fn from_ms(t_id_ms: f64, t_su_ms: f64) -> Self {
        CostModel {
            t_id: ms_to_ticks(t_id_ms),
            t_su: ms_to_ticks(t_su_ms),
        }
    }

    pub fn round(&self) -> Ticks {
        self.t_id + self.t_su
    }
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel::from_ms(3.0, 1.0)
    }
}

/// Run settings that are not part of the scenario file. `None` fields fall
/// back to the scenario or to the defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub mode: Mode,
    pub seed: Option<u64>,
    pub max_iterations: Option<u32>,
    /// Stable updates required before an agent counts as converged.
    pub k: u32,
    pub packet_loss: f64,
    pub mean_delay_ms: f64,
    pub cost: CostModel,
    /// Relative jitter applied to each asynchronous stage duration.
    pub jitter: f64,
    /// Asynchronous fairness window in scheduler steps; defaults to `2n`.
    pub fairness_window: Option<usize>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            mode: Mode::Sync,
            seed: None,
            max_iterations: None,
            k: 2,
            packet_loss: 0.0,
            mean_delay_ms: 0.5,
            cost: CostModel::default(),
            jitter: 0.1,
            fairness_window: None,
        }
    }
}

impl SimConfig {
    pub fn asynchronous() -> Self {
        SimConfig {
            mode: Mode::Async,
            ..SimConfig::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_packet_loss(mut self, p: f64) -> Self {
        self.packet_loss = p;
        self
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.k == 0 {
            out.push("K must be at least 1".to_string());
        }
        if !(0.0..=1.0).contains(&self.packet_loss) {
            out.push(format!("packet loss {} outside [0, 1]", self.packet_loss));
        }
        if !(self.mean_delay_ms.is_finite() && self.mean_delay_ms >= 0.0) {
            out.push(format!("mean delay {} must be >= 0", self.mean_delay_ms));
        }
        if !(0.0..1.0).contains(&self.jitter) {
            out.push(format!("jitter {} outside [0, 1)", self.jitter));
        }
        if self.cost.t_id < 0 || self.cost.t_su < 0 || self.cost.round() == 0 {
            out.push("stage costs must be >= 0 with a positive round time".to_string());
        }
        if self.max_iterations == Some(0) {
            out.push("max_iterations must be positive".to_string());
        }
        out
    }
}
