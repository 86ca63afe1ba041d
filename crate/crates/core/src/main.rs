use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mehler_toolkit::cli::{self, RunConfig, EXIT_CONFIG, EXIT_FAIL, EXIT_PASS};
use mehler_toolkit::Result;

#[derive(Parser)]
#[command(
    name = "mehler",
    version,
    about = "Numerical checks for generalized Mehler semigroups"
)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a verification suite (or `all`) and write its reports.
    Verify {
        suite: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exploratory experiments.
    Experiment {
        #[command(subcommand)]
        which: ExperimentKind,
    },
    /// Sample paths of the configured Lévy process.
    Simulate {
        #[command(subcommand)]
        which: SimulateKind,
    },
}

#[derive(Subcommand)]
enum ExperimentKind {
    /// Stationary integral with and without a finite log-moment.
    Logmoment {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Subcommand)]
enum SimulateKind {
    /// One path written as CSV.
    Path {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        horizon: f64,
        #[arg(long)]
        step: f64,
    },
}

fn load(path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<RunConfig> {
    let mut config = RunConfig::load(path)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(o) = out {
        config.output_dir = o;
    }
    Ok(config)
}

fn run(args: Args) -> Result<i32> {
    match args.command {
        Command::Verify {
            suite,
            config,
            seed,
            out,
        } => {
            let config = load(&config, seed, out)?;
            let reports = cli::verify(&config, &suite, &config.output_dir)?;
            let mut code = EXIT_PASS;
            for r in &reports {
                let s = &r.summary;
                println!(
                    "{:<15} {:>5}/{:<5} {}",
                    r.suite,
                    s.passed,
                    s.total,
                    if s.pass { "PASS" } else { "FAIL" }
                );
                if !s.pass {
                    code = EXIT_FAIL;
                }
            }
            println!("reports written to {}", config.output_dir.display());
            Ok(code)
        }
        Command::Experiment {
            which: ExperimentKind::Logmoment { config },
        } => {
            let config = load(&config, None, None)?;
            let report = cli::run_logmoment_experiment(&config)?;
            report.write(&config.output_dir)?;
            println!("exploratory: labels are observations, not verdicts");
            for m in &report.models {
                let label = serde_json::to_value(m.label)?;
                println!(
                    "{:<20} {:<18} {}",
                    m.name,
                    m.jump_law,
                    label.as_str().unwrap_or("")
                );
            }
            Ok(EXIT_PASS)
        }
        Command::Simulate {
            which:
                SimulateKind::Path {
                    config,
                    horizon,
                    step,
                },
        } => {
            let config = load(&config, None, None)?;
            let file = cli::simulate_path(&config, horizon, step, &config.output_dir)?;
            println!("{}", file.display());
            Ok(EXIT_PASS)
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let code = match run(args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    };
    ExitCode::from(code as u8)
}
