use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::Result;

use super::config::RunConfig;

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const LEVY_CLASS_NOTE: &str =
    "Levy measures restricted to finite activity (compound Poisson jumps)";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRecord {
    pub check: String,
    pub inputs: BTreeMap<String, Value>,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckRecord {
    /// Passes when `residual <= tolerance` (and the residual is a number).
    pub fn new(check: impl Into<String>, residual: f64, tolerance: f64) -> Self {
        Self {
            check: check.into(),
            inputs: BTreeMap::new(),
            residual,
            tolerance,
            pass: residual <= tolerance,
        }
    }

    /// Passes when `residual < tolerance`.
    pub fn strict(check: impl Into<String>, residual: f64, tolerance: f64) -> Self {
        Self {
            pass: residual < tolerance,
            ..Self::new(check, residual, tolerance)
        }
    }

    pub fn with(mut self, key: &str, value: impl Serialize) -> Self {
        self.inputs.insert(
            key.to_string(),
            serde_json::to_value(value).unwrap_or(Value::Null),
        );
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub artifact_version: String,
    pub levy_class: String,
    /// Seconds since the Unix epoch; the only field that varies between identical runs.
    pub timestamp: u64,
}

impl Provenance {
    pub fn for_config(config: &RunConfig) -> Self {
        Self {
            config_hash: config_hash(config),
            seed: config.seed,
            artifact_version: ARTIFACT_VERSION.to_string(),
            levy_class: LEVY_CLASS_NOTE.to_string(),
            timestamp: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }
}

/// SHA-256 of the serialized config. The output directory is left out since
/// it does not affect results.
pub fn config_hash(config: &RunConfig) -> String {
    let mut c = config.clone();
    c.output_dir = Default::default();
    let bytes = serde_json::to_vec(&c).unwrap_or_default();
    hex::encode(Sha256::digest(&bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub suite: String,
    pub records: Vec<CheckRecord>,
    pub summary: Summary,
    pub provenance: Provenance,
}

impl VerificationReport {
    pub fn new(suite: &str, records: Vec<CheckRecord>, provenance: Provenance) -> Self {
        let passed = records.iter().filter(|r| r.pass).count();
        let total = records.len();
        let summary = Summary {
            total,
            passed,
            failed: total - passed,
            pass: passed == total,
        };
        Self {
            suite: suite.to_string(),
            records,
            summary,
            provenance,
        }
    }

    pub fn passed(&self) -> bool {
        self.summary.pass
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// A CSV table: header plus string rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: Vec<String>) -> Self {
        Self {
            name: name.to_string(),
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(dir.join(format!("{}.csv", self.name)))?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `prefix_1 .. prefix_d`
pub fn indexed(prefix: &str, d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("{prefix}_{i}")).collect()
}

/// Shortest round-trip decimal, switching to exponent form for very large or
/// very small magnitudes.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) || !x.is_finite() {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

pub fn fmt_all(v: &[f64]) -> Vec<String> {
    v.iter().map(|x| num(*x)).collect()
}
