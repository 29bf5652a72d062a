//! Result files: one JSON summary and one NDJSON line per trial.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::runner::{RunSummary, TrialRecord};
use super::{ScenarioConfig, ScenarioError};

pub const SUMMARY_FILE: &str = "summary.json";
pub const RECORDS_FILE: &str = "trials.ndjson";

fn io(path: &Path, e: impl std::fmt::Display) -> ScenarioError {
    ScenarioError::Io(format!("{}: {e}", path.display()))
}

/// Rounds to `digits` significant digits (decimal, round-half-even on the
/// formatted mantissa).
pub fn round_sig(x: f64, digits: usize) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", digits.saturating_sub(1), x).parse().unwrap_or(x)
}

/// SHA-256 hex digest of the config's canonical JSON form.
pub fn config_hash(config: &ScenarioConfig) -> String {
    let json = serde_json::to_string(config).expect("config serializes");
    hex::encode(Sha256::digest(json.as_bytes()))
}

/// Writes `summary.json` and `trials.ndjson` into `dir`. The directory must
/// exist unless `mkdirs` is set.
pub fn write_results(summary: &RunSummary, records: &[TrialRecord], dir: &Path, mkdirs: bool) -> Result<(), ScenarioError> {
    if mkdirs {
        fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    } else if !dir.is_dir() {
        return Err(io(dir, "output directory does not exist (pass --mkdirs to create it)"));
    }
    let path = dir.join(SUMMARY_FILE);
    let json = serde_json::to_string_pretty(summary).map_err(|e| io(&path, e))?;
    fs::write(&path, json + "\n").map_err(|e| io(&path, e))?;

    let path = dir.join(RECORDS_FILE);
    let file = fs::File::create(&path).map_err(|e| io(&path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| io(&path, e))?;
        w.write_all(b"\n").map_err(|e| io(&path, e))?;
    }
    w.flush().map_err(|e| io(&path, e))
}

pub fn read_summary(dir: &Path) -> Result<RunSummary, ScenarioError> {
    let path = dir.join(SUMMARY_FILE);
    let text = fs::read_to_string(&path).map_err(|e| io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| io(&path, e))
}

pub fn read_records(dir: &Path) -> Result<Vec<TrialRecord>, ScenarioError> {
    let path = dir.join(RECORDS_FILE);
    let file = fs::File::open(&path).map_err(|e| io(&path, e))?;
    BufReader::new(file)
        .lines()
        .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|l| {
            let l = l.map_err(|e| io(&path, e))?;
            serde_json::from_str(&l).map_err(|e| io(&path, e))
        })
        .collect()
}
