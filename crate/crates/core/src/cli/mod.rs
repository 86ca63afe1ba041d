//! Batch front end: configuration, verification suites, reports and the
//! log-moment experiment.

pub mod config;
pub mod experiment;
pub mod report;
pub mod suites;

use std::path::Path;

use crate::error::{Error, Result};
use crate::levy::sample_path;
use crate::rng::RngStream;

pub use config::{RunConfig, SUITES};
pub use experiment::{run_logmoment_experiment, ExperimentReport, Label};
pub use report::{CheckRecord, VerificationReport};
pub use suites::{run_suite, SuiteOutput};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
/// Any error that stops a run before a verdict.
pub const EXIT_CONFIG: i32 = 2;

/// Suites named by `name`: one suite, or for `all` the configured list
/// (every suite when the config lists none).
pub fn expand_suites(config: &RunConfig, name: &str) -> Result<Vec<String>> {
    if name == "all" {
        if config.suites.is_empty() {
            return Ok(SUITES.iter().map(|s| s.to_string()).collect());
        }
        return Ok(config.suites.clone());
    }
    if SUITES.contains(&name) {
        Ok(vec![name.to_string()])
    } else {
        Err(Error::UnknownSuite(name.to_string()))
    }
}

/// Runs suites in order, writing each report under `out`. Returns the reports.
pub fn verify(config: &RunConfig, name: &str, out: &Path) -> Result<Vec<VerificationReport>> {
    let mut reports = Vec::new();
    for suite in expand_suites(config, name)? {
        let output = run_suite(config, &suite)?;
        output.write(out)?;
        reports.push(output.report);
    }
    Ok(reports)
}

/// Samples one path of the configured model and writes `path.csv` under `out`.
pub fn simulate_path(
    config: &RunConfig,
    horizon: f64,
    step: f64,
    out: &Path,
) -> Result<std::path::PathBuf> {
    let stream = RngStream::new(config.seed).named("simulate");
    let path = sample_path(&config.model, horizon, step, &stream)?;
    std::fs::create_dir_all(out)?;
    let file = out.join("path.csv");
    path.write_csv(std::fs::File::create(&file)?)?;
    Ok(file)
}
