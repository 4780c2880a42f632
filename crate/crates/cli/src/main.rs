//! `ddp-grid`: validate, generate, run and compare load-management scenarios.
//!
//! Exit codes: 0 on success, 1 when an input fails validation, 2 when a run
//! or an output write fails.

mod args;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use ddp_core::operator::{
    generate_system, performance_index, run_command_sequence, sequence_csv, CommandSequence,
    IncentiveSchedule, LoadProfile, RunSummary,
};
use ddp_core::scenario::Scenario;
use ddp_core::simnet::{run, RunTrace, SimConfig};
use ddp_core::{solve_centralized, Clamps, Megawatts};

use args::{Cli, Command, CompareArgs, GenerateArgs, RunArgs, SimArgs};

/// Seed used when neither the command line nor the scenario names one.
const SEED_ENV: &str = "DDP_GRID_SEED";

#[derive(Debug)]
enum Failure {
    Invalid(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Invalid(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

type Outcome = Result<(), Failure>;

fn invalid(e: impl ToString) -> Failure {
    Failure::Invalid(e.to_string())
}

fn runtime(e: impl ToString) -> Failure {
    Failure::Runtime(e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Validate { scenario } => cmd_validate(&scenario),
        Command::Run(a) => cmd_run(&a),
        Command::Compare(a) => cmd_compare(&a),
        Command::Generate(a) => cmd_generate(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Invalid(m) => eprintln!("invalid input: {m}"),
                Failure::Runtime(m) => eprintln!("error: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}

/// Loads a scenario file, or a bundled scenario when no such file exists.
fn load_scenario(spec: &str) -> Result<Scenario, Failure> {
    let path = Path::new(spec);
    if path.exists() {
        Scenario::load(path).map_err(|e| invalid(format!("{spec}: {e}")))
    } else {
        Scenario::bundled(spec)
            .map_err(|_| invalid(format!("{spec}: no such file or bundled scenario")))
    }
}

fn env_seed() -> Result<Option<u64>, Failure> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| invalid(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

/// Scenario with command-line faults applied, and the run configuration.
/// Seed precedence: `--seed`, then the scenario's seed, then the
/// environment, then zero.
fn prepare(sim: &SimArgs) -> Result<(Scenario, SimConfig), Failure> {
    let scenario = load_scenario(&sim.scenario)?;
    let faults = sim
        .fault
        .iter()
        .map(|f| args::parse_fault(f).map_err(invalid))
        .collect::<Result<Vec<_>, _>>()?;
    let scenario = scenario.with_faults(faults).map_err(invalid)?;
    let mut config = SimConfig {
        mode: sim.mode.into(),
        seed: sim.seed.or(scenario.seed),
        max_iterations: sim.max_iterations,
        k: sim.k,
        packet_loss: sim.packet_loss,
        mean_delay_ms: sim.mean_delay_ms,
        cost: ddp_core::simnet::CostModel::from_ms(sim.t_id_ms, sim.t_su_ms),
        ..SimConfig::default()
    };
    if config.seed.is_none() {
        config.seed = Some(env_seed()?.unwrap_or(0));
    }
    let problems = config.problems();
    if !problems.is_empty() {
        return Err(invalid(problems.join("; ")));
    }
    Ok((scenario, config))
}

fn cmd_validate(spec: &str) -> Outcome {
    let s = load_scenario(spec)?;
    let cmd = s.command();
    println!("{spec}: valid");
    println!(
        "  {} users, {} sectors, {} links ({:.2} per agent), connected: {}",
        s.coalition.num_users(),
        s.coalition.num_sectors(),
        s.topology.link_count(),
        s.topology.links_per_agent(),
        s.topology.is_connected()
    );
    println!(
        "  running load {}, required reduction {}, capacity {}",
        s.resolved.running_load,
        s.required_reduction(),
        cmd.capacity_mw
    );
    println!(
        "  incentive {} $/MWh for {} h, {} faults, max_iterations {}",
        cmd.incentive_rate,
        cmd.duration_h,
        s.faults.len(),
        s.max_iterations
    );
    Ok(())
}

fn write_outputs(dir: &Path, scenario: &Scenario, trace: &RunTrace) -> Result<RunSummary, Failure> {
    fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
    let csv = fs::File::create(dir.join("trace.csv")).map_err(runtime)?;
    trace
        .write_csv(std::io::BufWriter::new(csv))
        .map_err(runtime)?;
    let summary = RunSummary::new(scenario, trace);
    let json = serde_json::to_string_pretty(&summary).map_err(runtime)?;
    fs::write(dir.join("summary.json"), json + "\n").map_err(runtime)?;
    Ok(summary)
}

fn print_summary(s: &RunSummary, dir: &Path) {
    let fmt = |v: Option<f64>| v.map_or("none (agents disagree)".into(), |u| u.to_string());
    println!("seed {} ({:?})", s.seed, s.mode);
    println!("  consensus utility {}", fmt(s.consensus_utility));
    println!(
        "  reduction {} of {} required, payment ${}",
        s.deployed_reduction_mw, s.required_reduction_mw, s.payment
    );
    println!(
        "  rounds {}, last change {}, converged {}, simulated {} ms, deployed by {} ms",
        s.rounds, s.convergence_iteration, s.converged, s.simulated_time_ms, s.deployment_time_ms
    );
    println!("  wrote {}", dir.display());
}

fn run_one(scenario: &Scenario, config: &SimConfig, dir: &Path) -> Result<RunSummary, Failure> {
    let trace = run(scenario, config).map_err(runtime)?;
    write_outputs(dir, scenario, &trace)
}

fn cmd_run(a: &RunArgs) -> Outcome {
    let (scenario, config) = prepare(&a.sim)?;
    if let Some(steps) = &a.sequence {
        return run_sequence(&scenario, &config, steps, a.dynamic_incentive, &a.out);
    }
    let base = config.seed.unwrap_or(0);
    let seeds: Vec<u64> = (0..a.repeat.max(1)).map(|i| base.wrapping_add(i)).collect();
    let dir_for = |seed: u64| {
        if seeds.len() == 1 {
            a.out.clone()
        } else {
            a.out.join(format!("seed-{seed}"))
        }
    };
    let jobs = a.jobs.max(1);
    let mut results: Vec<Result<RunSummary, Failure>> = Vec::with_capacity(seeds.len());
    for chunk in seeds.chunks(jobs) {
        let done: Vec<_> = std::thread::scope(|scope| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|&seed| {
                    let config = SimConfig {
                        seed: Some(seed),
                        ..config.clone()
                    };
                    let scenario = &scenario;
                    let dir = dir_for(seed);
                    scope.spawn(move || run_one(scenario, &config, &dir))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(runtime("run panicked"))))
                .collect()
        });
        results.extend(done);
    }
    for (seed, result) in seeds.iter().zip(results) {
        print_summary(&result?, &dir_for(*seed));
    }
    Ok(())
}

fn run_sequence(
    scenario: &Scenario,
    config: &SimConfig,
    steps: &str,
    dynamic: bool,
    out: &Path,
) -> Outcome {
    let reductions = steps
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| invalid(format!("sequence value {s:?} is not a number")))
                .and_then(|v| Megawatts::from_f64(v).map_err(invalid))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let cmd = scenario.command();
    let seq = CommandSequence::new(
        scenario.resolved.running_load,
        reductions
            .into_iter()
            .enumerate()
            .map(|(h, r)| (h as f64, r))
            .collect(),
        cmd.duration_h,
    )
    .map_err(invalid)?;
    let schedule = if dynamic {
        IncentiveSchedule::dynamic_default()
    } else {
        IncentiveSchedule::Static {
            rate: cmd.incentive_rate,
        }
    };
    let result = run_command_sequence(scenario, &seq, &schedule, config).map_err(runtime)?;
    fs::create_dir_all(out).map_err(runtime)?;
    let path = out.join("sequence.csv");
    fs::write(&path, sequence_csv(&result)).map_err(runtime)?;
    for s in &result {
        println!(
            "t={}h  P_R {}  Ic {} $/MWh  utility {}  payment ${}  settled in {} rounds ({} ms)",
            s.time_h,
            s.required_reduction_mw,
            s.incentive_rate,
            s.utility.map_or("none".into(), |u| u.to_string()),
            s.payment,
            s.rounds,
            s.tracking_latency_ms
        );
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_compare(a: &CompareArgs) -> Outcome {
    let (scenario, config) = prepare(&a.sim)?;
    let cmd = scenario.command();
    let start = Instant::now();
    let central =
        solve_centralized(&scenario.coalition, cmd.capacity_mw, &Clamps::new()).map_err(runtime)?;
    let t_g = start.elapsed().as_secs_f64() * 1000.0;
    let trace = run(&scenario, &config).map_err(runtime)?;
    let f_g = central.utility.as_f64();
    let f_d = trace
        .consensus_utility()
        .ok_or_else(|| runtime("distributed run ended without consensus"))?
        .as_f64();
    let t_d = trace.simulated_time_ms();
    println!("centralized: utility {f_g}, {t_g:.3} ms wall-clock");
    println!(
        "distributed: utility {f_d}, {t_d} ms simulated ({} rounds)",
        trace.rounds
    );
    let ratio = if f_g == 0.0 { 1.0 } else { f_d / f_g };
    println!("utility ratio {ratio:.4}");
    match performance_index(f_d, f_g, t_d, t_g) {
        Ok(p) => println!("performance index {:.4}", p.i_p),
        Err(e) => println!("performance index undefined: {e}"),
    }
    Ok(())
}

fn cmd_generate(a: &GenerateArgs) -> Outcome {
    let profile = LoadProfile {
        reduction_fraction: a.reduction_fraction,
        ..LoadProfile::default()
    };
    let seed = match a.seed {
        Some(s) => s,
        None => env_seed()?.unwrap_or(0),
    };
    let s = generate_system(a.agents, a.links_per_agent, &profile, seed).map_err(invalid)?;
    let text = s.to_json_string();
    match &a.out {
        Some(path) => {
            write_file(path, &text)?;
            eprintln!(
                "wrote {}: {} agents, {} links ({:.3} per agent), seed {seed}",
                path.display(),
                s.coalition.num_users(),
                s.topology.link_count(),
                s.topology.links_per_agent()
            );
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn write_file(path: &PathBuf, text: &str) -> Outcome {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(runtime)?;
    }
    fs::write(path, text).map_err(|e| runtime(format!("{}: {e}", path.display())))
}
