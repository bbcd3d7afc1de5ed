use std::path::PathBuf;
use std::process::Command;

use reactive_sgd::harness::{emit_csv, load_csv, summarize, ExperimentConfig};

const SMALL: &str = r#"
[system]
n = 3
f = 1

[data]
task = "linear_regression"
points = 40
dim = 2

[training]
batch = 4
iterations = 25

[scheme]
kind = "randomized"
q = 0.5

[adversary]
strategy = "sign_flip"
p = 0.5

[run]
trials = 3
seed = 42
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_reactive-sgd"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("reactive-sgd-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn csv_round_trip_preserves_the_summary() {
    let cfg = ExperimentConfig::from_toml_str(SMALL).unwrap();
    let records = cfg.execute().unwrap();
    let path = scratch("roundtrip").join("out.csv");
    emit_csv(&records, &path).unwrap();
    let back = load_csv(&path).unwrap();
    assert_eq!(summarize(&back).unwrap(), summarize(&records).unwrap());

    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 1 + 3 * 25);
    emit_csv(&back, &path).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), text);
}

#[test]
fn run_then_summarize() {
    let dir = scratch("run");
    let config = dir.join("small.toml");
    std::fs::write(&config, SMALL).unwrap();
    let out = dir.join("nested/small.csv");
    let status = bin()
        .args(["run", config.to_str().unwrap(), "--trials", "2", "--seed", "7", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    assert_eq!(load_csv(&out).unwrap().len(), 2);

    let summary = bin()
        .args(["summarize", out.to_str().unwrap(), "--f", "1", "--q", "0.5", "--p", "0.5"])
        .output()
        .unwrap();
    assert!(summary.status.success());
    let text = String::from_utf8(summary.stdout).unwrap();
    assert!(text.contains("mean efficiency"));
    assert!(text.contains("bound 0.666667"));
}

#[test]
fn output_directory_override() {
    let dir = scratch("env");
    let config = dir.join("exp.toml");
    std::fs::write(&config, SMALL).unwrap();
    let outdir = dir.join("results");
    let status = bin()
        .args(["run", config.to_str().unwrap()])
        .env("REACTIVE_SGD_OUT_DIR", &outdir)
        .output()
        .unwrap();
    assert!(status.status.success());
    assert!(outdir.join("exp.csv").is_file());
}

#[test]
fn config_errors_exit_with_two() {
    let dir = scratch("bad");
    let config = dir.join("bad.toml");
    std::fs::write(&config, SMALL.replacen("n = 3", "n = 2", 1)).unwrap();
    let out = bin().args(["run", config.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line 4: system.f: f < n/2 violated"), "{err}");

    let out = bin().args(["verify", "nope"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_prints_one_line_per_criterion() {
    let out = bin().args(["verify", "7,9"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines.iter().all(|l| l.starts_with("[PASS]")));
}
