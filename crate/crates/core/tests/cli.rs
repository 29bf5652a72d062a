use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qobs_core::fixtures::fixture;
use qobs_core::scenario::{read_records, read_summary};

fn qobs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qobs")).args(args).output().expect("qobs runs")
}

fn path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(fixture(name).unwrap().file)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn validate_accepts_every_fixture() {
    for name in ["minimal", "paper-dims", "damping", "skeptic-sweep", "strategy-sweep"] {
        let o = qobs(&["validate", "--config", path(name).to_str().unwrap()]);
        assert!(o.status.success(), "{name}: {}", stderr(&o));
    }
}

#[test]
fn validation_failures_list_every_field_and_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let text = fixture("minimal").unwrap().source.replace("eta = 0.5", "eta = 1.2").replace("epsilon = 0.75", "epsilon = 0.2");
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, text).unwrap();
    let o = qobs(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("icm.eta") && err.contains("strategy.epsilon"), "{err}");

    std::fs::write(&cfg, "[run]\ntrails = 2\n").unwrap();
    assert_eq!(qobs(&["validate", "--config", cfg.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn runtime_failures_exit_2() {
    let o = qobs(&["validate", "--config", "/nonexistent/config.toml"]);
    assert_eq!(o.status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("missing/deeper");
    let o = qobs(&["run", "--config", path("minimal").to_str().unwrap(), "--trials", "3", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--mkdirs"), "{}", stderr(&o));
}

#[test]
fn run_writes_summary_and_records() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = qobs(&[
        "run", "--config", path("minimal").to_str().unwrap(), "--trials", "25", "--seed", "4", "--out", out.to_str().unwrap(), "--mkdirs",
        "--oracle-check", "--born-mode", "paper",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = read_summary(&out).unwrap();
    let records = read_records(&out).unwrap();
    assert_eq!(summary.trials, 25);
    assert_eq!(records.len(), 25);
    assert_eq!(summary.provenance.seed, 4);
    assert_eq!(summary.provenance.generator, "ChaCha20Rng");
    assert!(records.iter().all(|r| r.oracle_deviation.is_some_and(|d| d < 1e-6)));
    let total: f64 = summary.frequencies.iter().sum();
    assert!((total - 1.0).abs() <= 1.0 / 25.0);
}

#[test]
fn sweeps_write_one_directory_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let o = qobs(&["run", "--config", path("strategy-sweep").to_str().unwrap(), "--trials", "10", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    for v in ["0.5", "0.625", "0.75", "0.875", "1"] {
        let s = read_summary(&dir.path().join(format!("epsilon={v}"))).unwrap();
        assert_eq!(s.trials, 10);
    }
}

#[test]
fn dims_and_fixture_listing() {
    let o = qobs(&["dims", "--config", path("minimal").to_str().unwrap()]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["sensory_dim"], 16);
    assert_eq!(v["matching_dim"], 16);
    assert_eq!(v["strategy_observer_dim"], 4);
    let o = qobs(&["fixtures"]);
    let listing = String::from_utf8(o.stdout).unwrap();
    assert_eq!(listing.lines().count(), 5);
    assert!(listing.contains("paper-dims"));
}
