use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::LevelFilter;

mod output;
mod sweep;

use output::{run_to_dir, CliError, RunStatus};

/// Online actor-critic station keeping: run scenarios, sweeps and the
/// built-in benchmark checks.
#[derive(Debug, Parser)]
#[command(name = "auv-adp", version)]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one scenario and write trajectory.csv, summary.json and
    /// conditions.json.
    Run {
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Compare the learned weights with the game Riccati solution.
        #[arg(long)]
        oracle: bool,
    },
    /// Run the embedded benchmark checks and print a pass/fail table.
    Verify {
        /// Scales every tolerance; used to exercise the failure path.
        #[arg(long, default_value_t = 1.0, hide = true)]
        tolerance_scale: f64,
    },
    /// Run a grid of scenarios concurrently, one subdirectory each, plus
    /// index.csv.
    Sweep {
        manifest: PathBuf,
        #[arg(long, default_value = "sweep_out")]
        out: PathBuf,
    },
}

const EXIT_CONFIG: u8 = 1;
const EXIT_DIVERGED: u8 = 2;
const EXIT_VERIFY: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => LevelFilter::Warn,
        1 => LevelFilter::Info,
        _ => LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();

    match cli.command {
        Command::Run {
            scenario,
            out,
            dt,
            duration,
            seed,
            oracle,
        } => {
            let result = output::load_scenario(&scenario, |doc| {
                if let Some(v) = dt {
                    doc.dt = v;
                }
                if let Some(v) = duration {
                    doc.duration = v;
                }
                if let Some(v) = seed {
                    doc.seed = v;
                }
            })
            .and_then(|sc| run_to_dir(&sc, oracle, &out));
            match result {
                Ok(RunStatus::Completed) | Ok(RunStatus::OracleFailed) => {
                    println!("wrote {}", out.display());
                    ExitCode::SUCCESS
                }
                Ok(RunStatus::Diverged) => {
                    eprintln!("run diverged; partial outputs in {}", out.display());
                    ExitCode::from(EXIT_DIVERGED)
                }
                Err(e) => report(e),
            }
        }
        Command::Verify { tolerance_scale } => {
            let report = auv_adp::verify::run_checks(tolerance_scale);
            println!("{:<28} {:>14} {:>14}  result", "check", "measured", "tolerance");
            for c in &report.checks {
                println!(
                    "{:<28} {:>14.3e} {:>14.3e}  {}",
                    c.name,
                    c.measured,
                    c.tolerance,
                    if c.passed { "PASS" } else { "FAIL" }
                );
            }
            if report.all_passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_VERIFY)
            }
        }
        Command::Sweep { manifest, out } => match sweep::run_sweep(&manifest, &out) {
            Ok(outcome) => {
                println!("wrote {} runs to {}", outcome.rows, out.display());
                if outcome.any_failed {
                    ExitCode::from(EXIT_DIVERGED)
                } else if outcome.any_config_error {
                    ExitCode::from(EXIT_CONFIG)
                } else {
                    ExitCode::SUCCESS
                }
            }
            Err(e) => report(e),
        },
    }
}

fn report(e: CliError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(EXIT_CONFIG)
}
