use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ddp_core::simnet::{FaultEvent, FaultKind, Mode};

#[derive(Debug, Parser)]
#[command(
    name = "ddp-grid",
    version,
    about = "Distributed load-management simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a scenario file and print its key figures.
    Validate {
        /// Scenario file, or the name of a bundled scenario.
        scenario: String,
    },
    /// Run the distributed protocol and write trace.csv and summary.json.
    Run(RunArgs),
    /// Compare the distributed result with the centralized optimum.
    Compare(CompareArgs),
    /// Write a random connected test system.
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Sync,
    Async,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Sync => Mode::Sync,
            ModeArg::Async => Mode::Async,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimArgs {
    /// Scenario file, or the name of a bundled scenario.
    pub scenario: String,
    #[arg(long, value_enum, default_value = "sync")]
    pub mode: ModeArg,
    /// RNG seed; falls back to the scenario's seed, then DDP_GRID_SEED, then 0.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_iterations: Option<u32>,
    /// Probability that any single delivery is lost.
    #[arg(long, default_value_t = 0.0)]
    pub packet_loss: f64,
    /// Mean one-way latency for asynchronous runs.
    #[arg(long, default_value_t = 0.5)]
    pub mean_delay_ms: f64,
    /// Stable updates an agent needs before it counts as converged.
    #[arg(short = 'K', long = "stable-rounds", default_value_t = 2)]
    pub k: u32,
    /// Information-discovery time per round.
    #[arg(long, default_value_t = 3.0)]
    pub t_id_ms: f64,
    /// State-update time per round.
    #[arg(long, default_value_t = 1.0)]
    pub t_su_ms: f64,
    /// Extra fault as `kind:args@iteration` or `kind:args@<t>ms`, e.g.
    /// `link_loss:9-14@5` or `load_disconnect:10=100@20ms`. Repeatable.
    #[arg(long)]
    pub fault: Vec<String>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Run this many consecutive seeds starting at the resolved seed.
    #[arg(long, default_value_t = 1)]
    pub repeat: u64,
    /// Worker threads for repeated runs.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Hourly required reductions in MW, comma separated; writes sequence.csv.
    #[arg(long)]
    pub sequence: Option<String>,
    /// Price sequence steps with the default dynamic incentive schedule.
    #[arg(long, requires = "sequence")]
    pub dynamic_incentive: bool,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub sim: SimArgs,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub agents: usize,
    /// Average links per agent.
    #[arg(long)]
    pub links_per_agent: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Required reduction as a fraction of the total baseline.
    #[arg(long, default_value_t = 0.05)]
    pub reduction_fraction: f64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `kind:args@trigger`, where the trigger is an iteration count or a
/// time such as `12.5ms`.
pub fn parse_fault(text: &str) -> Result<FaultEvent, String> {
    let (kind, at) = text
        .rsplit_once('@')
        .ok_or_else(|| format!("fault {text:?} lacks an @trigger"))?;
    let kind: FaultKind = kind.parse()?;
    match at.strip_suffix("ms") {
        Some(ms) => {
            let t: f64 = ms
                .parse()
                .map_err(|_| format!("fault {text:?}: bad time {at:?}"))?;
            if !(t.is_finite() && t >= 0.0) {
                return Err(format!("fault {text:?}: time must be >= 0"));
            }
            Ok(FaultEvent::at_time_ms(t, kind))
        }
        None => at
            .parse()
            .map(|k| FaultEvent::at_iteration(k, kind))
            .map_err(|_| format!("fault {text:?}: bad iteration {at:?}")),
    }
}
