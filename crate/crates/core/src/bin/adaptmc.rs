//! `adaptmc`: run, validate and inspect adaptive MCMC experiments.
//!
//! Exit codes: 0 success, 1 a required diagnostic failed, 2 config error,
//! 3 I/O error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adaptmc::config::{parse_config, ExperimentConfig};
use adaptmc::diagnostics::{simulate_two_state, two_state_oracle};
use adaptmc::experiment::{run_experiment, Overrides};
use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "adaptmc", version, about = "Adaptive MCMC with stochastic-approximation reprojections")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write traces, reports and a manifest.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        steps: Option<u64>,
        /// Output directory (overrides `output` in the config).
        #[arg(long)]
        out: Option<String>,
        /// Worker threads for replicates (default: available parallelism).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Check a config without running it.
    Validate { config: PathBuf },
    /// Closed-form oracles.
    #[command(subcommand)]
    Oracle(Oracle),
}

#[derive(Subcommand)]
enum Oracle {
    /// Two-state chain whose transition probability depends on the state.
    TwoState {
        #[arg(long)]
        theta1: f64,
        #[arg(long)]
        theta2: f64,
        /// Also simulate this many steps and report the occupancy.
        #[arg(long, default_value_t = 0)]
        simulate: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

const EXIT_DIAGNOSTIC: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;

fn load(path: &Path) -> Result<ExperimentConfig, ExitCode> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        eprintln!("error: {}: {e}", path.display());
        ExitCode::from(EXIT_IO)
    })?;
    parse_config(&text).map_err(|errs| {
        for e in errs {
            eprintln!("error: {e}");
        }
        ExitCode::from(EXIT_CONFIG)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { config } => match load(&config) {
            Ok(_) => {
                println!("{}: ok", config.display());
                ExitCode::SUCCESS
            }
            Err(code) => code,
        },
        Command::Run { config, seed, steps, out, workers } => {
            let cfg = match load(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            let cfg = match (Overrides { seed, steps, output: out }).apply(cfg) {
                Ok(c) => c,
                Err(errs) => {
                    for e in errs {
                        eprintln!("error: {e}");
                    }
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            match run_experiment(&cfg, workers) {
                Ok(manifest) => {
                    for c in &manifest.checks {
                        let status = if c.passed { "pass" } else { "FAIL" };
                        let req = if c.required { " (required)" } else { "" };
                        println!("{status} {}{req}: {}", c.name, c.detail);
                    }
                    let dir = Path::new(&cfg.output);
                    if let Some(m) = manifest.artifacts.iter().find(|a| a.kind == "manifest") {
                        println!("manifest: {}", dir.join(&m.path).display());
                    }
                    if manifest.passed() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(EXIT_DIAGNOSTIC)
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
        Command::Oracle(Oracle::TwoState { theta1, theta2, simulate, seed }) => {
            let report = match two_state_oracle(theta1, theta2) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            let mut value = serde_json::to_value(&report).expect("serializable");
            if simulate > 0 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let occ = simulate_two_state(theta1, theta2, simulate, &mut rng);
                value["simulated_occupancy"] = serde_json::json!(occ);
            }
            println!("{}", serde_json::to_string_pretty(&value).expect("serializable"));
            ExitCode::SUCCESS
        }
    }
}
