use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn grid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddp-grid"))
        .args(args)
        .env_remove("DDP_GRID_SEED")
        .output()
        .expect("spawn ddp-grid")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

fn bundled_json(name: &str) -> Value {
    let path = format!(
        "{}/../core/scenarios/{name}.json",
        env!("CARGO_MANIFEST_DIR")
    );
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn validate_accepts_bundled_scenarios() {
    for name in ["ieee14", "three-agent"] {
        let o = grid(&["validate", name]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).contains("valid"));
    }
}

#[test]
fn validate_rejects_bad_files() {
    let tmp = TempDir::new().unwrap();
    let mut dup = bundled_json("ieee14");
    let first = dup["topology"]["edges"][0].clone();
    dup["topology"]["edges"].as_array_mut().unwrap().push(first);
    let path = tmp.path().join("dup.json");
    fs::write(&path, dup.to_string()).unwrap();
    let o = grid(&["validate", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));

    let mut greedy = bundled_json("three-agent");
    greedy["command"]["required_reduction_mw"] = 1e6.into();
    let path = tmp.path().join("greedy.json");
    fs::write(&path, greedy.to_string()).unwrap();
    assert_eq!(
        grid(&["validate", path.to_str().unwrap()]).status.code(),
        Some(1)
    );

    assert_eq!(
        grid(&["validate", "no-such-scenario"]).status.code(),
        Some(1)
    );
}

#[test]
fn run_writes_trace_and_summary() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("three");
    let o = grid(&["run", "three-agent", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("consensus utility 220"));
    let s = summary(&out);
    assert_eq!(s["consensus_utility"], 220.0);
    assert_eq!(s["payment"], 15_000.0);
    let csv = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(csv.starts_with("iteration,agent_id,J_ii,"));
}

#[test]
fn fault_flags_reach_the_simulation() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("cut");
    let o = grid(&[
        "run",
        "ieee14",
        "--fault",
        "link_loss:9-14@5",
        "--fault",
        "link_loss:12-13@5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert_eq!(summary(&out)["consensus_utility"], 7120.0);

    let out = tmp.path().join("clamp");
    let o = grid(&[
        "run",
        "ieee14",
        "--fault",
        "load_disconnect:10=100@5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert_eq!(summary(&out)["consensus_utility"], 7000.0);

    assert_eq!(
        grid(&["run", "ieee14", "--fault", "link_loss:1-9@5"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        grid(&["run", "ieee14", "--fault", "meteor:3@5"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn same_seed_gives_identical_outputs() {
    let tmp = TempDir::new().unwrap();
    let run = |dir: &str, seed: &str| {
        let out = tmp.path().join(dir);
        let args = [
            "run",
            "ieee14",
            "--mode",
            "async",
            "--packet-loss",
            "0.3",
            "--seed",
            seed,
        ];
        let o = grid(&[&args[..], &["--out", out.to_str().unwrap()]].concat());
        assert!(o.status.success());
        fs::read_to_string(out.join("trace.csv")).unwrap()
    };
    assert_eq!(run("a", "5"), run("b", "5"));
    assert_ne!(run("a", "5"), run("c", "6"));
}

#[test]
fn seed_comes_from_the_environment_when_not_given() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("env");
    let o = Command::new(env!("CARGO_BIN_EXE_ddp-grid"))
        .args(["run", "ieee14", "--out", out.to_str().unwrap()])
        .env("DDP_GRID_SEED", "41")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(summary(&out)["seed"], 41);

    let o = grid(&[
        "run",
        "ieee14",
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert_eq!(summary(&out)["seed"], 3);
}

#[test]
fn repeated_runs_use_consecutive_seeds() {
    let tmp = TempDir::new().unwrap();
    let o = grid(&[
        "run",
        "ieee14",
        "--packet-loss",
        "0.2",
        "--seed",
        "10",
        "--repeat",
        "3",
        "--jobs",
        "2",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(o.status.success());
    for seed in 10..13 {
        assert_eq!(
            summary(&tmp.path().join(format!("seed-{seed}")))["seed"],
            seed
        );
    }
}

#[test]
fn sequence_writes_csv() {
    let tmp = TempDir::new().unwrap();
    let o = grid(&[
        "run",
        "ieee14",
        "--sequence",
        "120,160,200,140,100",
        "--dynamic-incentive",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let csv = fs::read_to_string(tmp.path().join("sequence.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
    assert!(stdout(&o).contains("Ic 93.75"));
}

#[test]
fn compare_reports_full_ratio_on_ieee14() {
    let o = grid(&["compare", "ieee14"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("utility ratio 1.0000"), "{text}");
    assert!(text.contains("performance index"));
}

#[test]
fn generated_systems_validate() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("big.json");
    let p = path.to_str().unwrap();
    let o = grid(&[
        "generate",
        "--agents",
        "1062",
        "--links-per-agent",
        "1.54",
        "--seed",
        "7",
        "--out",
        p,
    ]);
    assert!(o.status.success());
    assert!(grid(&["validate", p]).status.success());

    let o = grid(&[
        "generate",
        "--agents",
        "14",
        "--links-per-agent",
        "1.43",
        "--seed",
        "1",
    ]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let links = v["topology"]["edges"].as_array().unwrap().len();
    assert!((19..=21).contains(&links), "{links}");

    let o = grid(&["generate", "--agents", "2", "--links-per-agent", "0.5"]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["topology"]["edges"].as_array().unwrap().len(), 1);

    let o = grid(&["generate", "--agents", "14", "--links-per-agent", "0.5"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn usage_errors_and_help() {
    assert_eq!(grid(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(grid(&["run"]).status.code(), Some(1));
    assert_eq!(
        grid(&["run", "ieee14", "--packet-loss", "1.5"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(grid(&["--help"]).status.code(), Some(0));
    assert_eq!(grid(&["--version"]).status.code(), Some(0));
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let tmp = TempDir::new().unwrap();
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let o = grid(&["run", "three-agent", "--out", blocker.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
