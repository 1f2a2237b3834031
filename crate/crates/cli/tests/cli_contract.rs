//! Black-box tests of the collapse-sim binary: subcommands, exit codes,
//! output files, and byte-level determinism across worker counts.

use std::path::Path;
use std::process::{Command, Output};

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_collapse-sim"))
}

fn run(args: &[&str]) -> Output {
    binary().args(args).output().expect("binary runs")
}

fn small_csl_config() -> &'static str {
    r#"
model = "csl"
master_seed = 99
n_trajectories = 8
t_final = 0.1
dt = 0.0002
sample_times = [0.0, 0.05, 0.1]

[grid]
n_sites = 64
dx = 0.5
x_min = -16.0

[initial_state]
kind = "cat"
centers = [-5.0, 5.0]
sigma = 1.0
weights = [1.0, 1.0]

[collapse]
lambda_rate = 1.0
r_c = 1.0
"#
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("experiment.toml");
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn run_emits_identical_bytes_for_any_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), small_csl_config());
    let mut outputs = Vec::new();
    for (name, workers) in [("a.json", "1"), ("b.json", "8"), ("c.json", "1")] {
        let path = dir.path().join(name);
        let out = run(&[
            "run",
            &config,
            "--workers",
            workers,
            "--format",
            "tree",
            "--output",
            path.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(outputs[0], outputs[1], "1 vs 8 workers differ");
    assert_eq!(outputs[0], outputs[2], "consecutive runs differ");

    let table_1 = run(&[
        "run", &config, "--workers", "1", "--format", "table",
    ]);
    let table_8 = run(&[
        "run", &config, "--workers", "8", "--format", "table",
    ]);
    assert!(table_1.status.success());
    assert_eq!(table_1.stdout, table_8.stdout);
    assert!(String::from_utf8_lossy(&table_1.stdout).contains("time_natural"));
}

#[test]
fn seed_flag_overrides_the_config_seed() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), small_csl_config());
    let base = run(&["run", &config, "--format", "tree"]);
    let overridden = run(&["run", &config, "--seed", "1234", "--format", "tree"]);
    assert!(base.status.success() && overridden.status.success());
    assert_ne!(base.stdout, overridden.stdout);
    let doc: serde_json::Value =
        serde_json::from_slice(&overridden.stdout).expect("tree output is JSON");
    assert_eq!(doc["config"]["master_seed"], 1234);
}

#[test]
fn invalid_config_exits_1_naming_every_violation() {
    let dir = tempfile::tempdir().unwrap();
    let bad = small_csl_config()
        .replace("n_trajectories = 8", "n_trajectories = 0")
        .replace("lambda_rate = 1.0", "lambda_rate = -2.0");
    let config = write_config(dir.path(), &bad);
    let out = run(&["run", &config]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("n_trajectories"), "{stderr}");
    assert!(stderr.contains("collapse.lambda_rate"), "{stderr}");
}

#[test]
fn missing_config_file_exits_1() {
    let out = run(&["run", "/nonexistent/experiment.toml"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn numerical_failure_exits_2_with_the_trajectory_index() {
    let dir = tempfile::tempdir().unwrap();
    // Validates (no Hamiltonian, so no step bound applies) but the coarse
    // step breaks the diffusion norm contract at run time.
    let coarse = small_csl_config()
        .replace("dt = 0.0002", "dt = 0.01")
        .replace("sample_times = [0.0, 0.05, 0.1]", "sample_times = [0.0, 0.05, 0.1]");
    let config = write_config(dir.path(), &coarse);
    let out = run(&["run", &config]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("trajectory"), "{stderr}");
}

#[test]
fn schema_prints_the_config_contract() {
    let out = run(&["schema"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("master_seed"));
    assert!(text.contains("sha-256") || text.contains("SHA-256"));
    assert!(text.contains("[collapse]"));
}

#[test]
fn convert_units_reports_the_derived_couplings() {
    let out = run(&["convert-units", "--lambda-per-s", "1e-17", "--r-c-cm", "1e-5"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("gamma_3d_cgs = 4.454662397465e-31"), "{text}");
    assert!(text.contains("time_unit"));
    let bad = run(&["convert-units", "--r-c-cm", "-1.0"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn verify_subsets_select_by_substring_and_set_the_exit_code() {
    let vacuous = run(&["verify", "--subset", "zzz-no-such-check"]);
    assert!(vacuous.status.success());
    assert!(String::from_utf8_lossy(&vacuous.stdout).contains("0 checks selected"));

    let fast = run(&["verify", "--subset", "completeness"]);
    assert!(fast.status.success());
    assert!(String::from_utf8_lossy(&fast.stdout).contains("PASS completeness"));

    let faulted = run(&[
        "verify",
        "--subset",
        "amplification",
        "--inject-fault",
        "lambda-doubled",
    ]);
    assert_eq!(faulted.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&faulted.stdout).contains("FAIL amplification"));

    let unknown_fault = run(&["verify", "--inject-fault", "bogus"]);
    assert_eq!(unknown_fault.status.code(), Some(1));
}
