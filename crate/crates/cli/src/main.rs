use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use olc_sim::cases::{self, CASE_DIR_ENV};
use olc_sim::commands::{cmd_check, cmd_simulate, cmd_solve, CheckReport};
use olc_sim::scenario::{parse_controller, ControllerEntry, Overrides};
use olc_sim::{exit, CliError};

/// Load-side frequency control: solve the optimal load control problem,
/// simulate the closed-loop swing dynamics, and check that they agree.
#[derive(Parser)]
#[command(name = "olc-sim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: OverrideArgs,
}

#[derive(Args)]
struct OverrideArgs {
    /// Integration step in seconds.
    #[arg(long = "h", global = true, value_name = "SECONDS")]
    step: Option<f64>,
    /// Simulation horizon in seconds.
    #[arg(long, global = true, value_name = "SECONDS")]
    horizon: Option<f64>,
    /// Record every N-th step.
    #[arg(long, global = true, value_name = "N")]
    decimation: Option<usize>,
    /// `continuous` or `sampled:<ms>`.
    #[arg(long, global = true, value_parser = parse_controller, value_name = "MODE")]
    controller: Option<ControllerEntry>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the optimal loads and equilibrium flows; prints JSON.
    Solve {
        /// Scenario file or built-in case name.
        case: String,
    },
    /// Integrate the dynamics, write the trajectory CSV, print a JSON summary.
    Simulate {
        case: String,
        #[arg(long, value_name = "CSV")]
        out: PathBuf,
    },
    /// Solve, simulate and print a pass/fail table of the convergence checks.
    Check {
        #[arg(required_unless_present = "all", conflicts_with = "all")]
        case: Option<String>,
        /// Check every built-in case (from the case directory when set).
        #[arg(long)]
        all: bool,
    },
}

fn json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("output serializes")
}

/// Writes to stdout, ignoring a closed pipe (`olc-sim ... | head`).
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn warn(scenario: &olc_sim::Scenario) {
    for w in &scenario.warnings {
        eprintln!("warning: {}: {w}", scenario.name);
    }
}

fn check_one(case: &str, overrides: &Overrides) -> Result<CheckReport, CliError> {
    let scenario = cases::resolve(case, overrides)?;
    warn(&scenario);
    cmd_check(&scenario)
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let o = cli.overrides;
    let overrides = Overrides {
        step: o.step,
        horizon: o.horizon,
        decimation: o.decimation,
        controller: o.controller,
    };
    match cli.command {
        Command::Solve { case } => {
            let scenario = cases::resolve(&case, &overrides)?;
            warn(&scenario);
            emit(&format!("{}\n", json(&cmd_solve(&scenario)?)));
            Ok(exit::OK)
        }
        Command::Simulate { case, out } => {
            let scenario = cases::resolve(&case, &overrides)?;
            warn(&scenario);
            let (_, summary) = cmd_simulate(&scenario, &out)?;
            emit(&format!("{}\n", json(&summary)));
            Ok(exit::OK)
        }
        Command::Check { case: Some(case), .. } => {
            let report = check_one(&case, &overrides)?;
            emit(&report.render());
            match report.failures() {
                0 => Ok(exit::OK),
                n => Err(CliError::ChecksFailed(n)),
            }
        }
        Command::Check { case: None, .. } => {
            if let Some(dir) = std::env::var_os(CASE_DIR_ENV) {
                eprintln!("using case directory {}", PathBuf::from(dir).display());
            }
            let results: Vec<_> = std::thread::scope(|s| {
                let handles: Vec<_> = cases::BUILTIN
                    .iter()
                    .map(|&name| s.spawn(move || check_one(name, &overrides)))
                    .collect();
                handles.into_iter().map(|h| h.join().expect("check thread panicked")).collect()
            });
            let mut failures = 0;
            let mut first_error = None;
            for (name, r) in cases::BUILTIN.iter().zip(results) {
                match r {
                    Ok(report) => {
                        failures += report.failures();
                        emit(&format!("{}\n", report.render()));
                    }
                    Err(e) => {
                        emit(&format!("{name}: ERROR {e}\n\n"));
                        first_error.get_or_insert(e);
                    }
                }
            }
            if let Some(e) = first_error {
                return Err(e);
            }
            match failures {
                0 => Ok(exit::OK),
                n => Err(CliError::ChecksFailed(n)),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
