use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use auv_adp::sim::{run, RunOptions, Scenario, ScenarioDoc, ScenarioError, SimError, Summary, TrajectoryLog};
use serde::Serialize;

#[derive(Debug)]
pub enum CliError {
    Scenario(ScenarioError),
    Io(PathBuf, std::io::Error),
    Csv(PathBuf, csv::Error),
    Json(PathBuf, serde_json::Error),
    Manifest(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Scenario(e) => write!(f, "{e}"),
            CliError::Io(p, e) => write!(f, "{}: {e}", p.display()),
            CliError::Csv(p, e) => write!(f, "{}: {e}", p.display()),
            CliError::Json(p, e) => write!(f, "{}: {e}", p.display()),
            CliError::Manifest(m) => write!(f, "invalid sweep manifest: {m}"),
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        CliError::Scenario(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    OracleFailed,
    Diverged,
}

/// Read a scenario file, apply overrides to the raw document, validate.
pub fn load_scenario(path: &Path, overrides: impl FnOnce(&mut ScenarioDoc)) -> Result<Scenario, CliError> {
    let mut doc = ScenarioDoc::from_path(path)?;
    overrides(&mut doc);
    Ok(Scenario::from_doc(&doc)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
    serde_json::to_writer_pretty(BufWriter::new(file), value).map_err(|e| CliError::Json(path.to_path_buf(), e))
}

fn write_log(path: &Path, log: &TrajectoryLog) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
    log.write_csv(BufWriter::new(file))
        .map_err(|e| CliError::Csv(path.to_path_buf(), e))
}

/// Simulate and write `trajectory.csv`, `summary.json` and
/// `conditions.json` into `out`. Returns the summary alongside the status.
pub fn run_to_dir_with_summary(sc: &Scenario, oracle: bool, out: &Path) -> Result<(RunStatus, Summary), CliError> {
    let outcome = run(sc, RunOptions { attach_oracle: oracle });
    fs::create_dir_all(out).map_err(|e| CliError::Io(out.to_path_buf(), e))?;
    let (status, summary, log) = match outcome {
        Ok(result) => {
            let summary = Summary::completed(sc, &result);
            let status = if summary.oracle_error.is_some() {
                RunStatus::OracleFailed
            } else {
                RunStatus::Completed
            };
            (status, summary, result.log)
        }
        Err(SimError::Diverged { time, reason, log }) => {
            log::warn!("{}: diverged at t = {time}: {reason}", sc.name);
            (RunStatus::Diverged, Summary::diverged(sc, time, &reason, &log), *log)
        }
        Err(SimError::Setup(e)) => return Err(e.into()),
    };
    let c_lower = summary.initial_rank.as_ref().map_or(0.0, |r| r.c_lower);
    write_log(&out.join("trajectory.csv"), &log)?;
    write_json(&out.join("summary.json"), &summary)?;
    write_json(&out.join("conditions.json"), &sc.gain_conditions(c_lower))?;
    Ok((status, summary))
}

pub fn run_to_dir(sc: &Scenario, oracle: bool, out: &Path) -> Result<RunStatus, CliError> {
    run_to_dir_with_summary(sc, oracle, out).map(|(s, _)| s)
}
