use std::fs::{self, File};
use std::path::{Path, PathBuf};

use auv_adp::sim::{Scenario, ScenarioDoc, Summary};
use rayon::prelude::*;
use serde::Deserialize;

use crate::output::{run_to_dir_with_summary, CliError, RunStatus};

/// Sweep manifest: a base scenario and the values to try per axis.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    /// Resolved relative to the manifest's directory.
    scenario: PathBuf,
    #[serde(default)]
    oracle: bool,
    axes: Axes,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Axes {
    eta_c: Option<Vec<f64>>,
    eta_a1: Option<Vec<f64>>,
    eta_a2: Option<Vec<f64>>,
    gamma: Option<Vec<f64>>,
}

type Setter = fn(&mut ScenarioDoc, f64);
type Axis = (&'static str, Vec<f64>, Setter);

impl Axes {
    fn active(&self) -> Result<Vec<Axis>, CliError> {
        let entries: [(&'static str, &Option<Vec<f64>>, Setter); 4] = [
            ("eta_c", &self.eta_c, |d, v| d.gains.eta_c = v),
            ("eta_a1", &self.eta_a1, |d, v| d.gains.eta_a1 = v),
            ("eta_a2", &self.eta_a2, |d, v| d.gains.eta_a2 = v),
            ("gamma", &self.gamma, |d, v| d.cost.gamma = v),
        ];
        let mut out = Vec::new();
        for (name, values, set) in entries {
            if let Some(values) = values {
                if values.is_empty() {
                    return Err(CliError::Manifest(format!("axis `{name}` has no values")));
                }
                out.push((name, values.clone(), set));
            }
        }
        if out.is_empty() {
            return Err(CliError::Manifest("no axes given".into()));
        }
        Ok(out)
    }
}

pub struct SweepOutcome {
    pub rows: usize,
    pub any_failed: bool,
    pub any_config_error: bool,
}

struct Row {
    values: Vec<f64>,
    status: String,
    summary: Option<Summary>,
    message: Option<String>,
}

/// Every combination of axis values, first axis varying slowest.
fn grid(axes: &[Axis]) -> Vec<Vec<f64>> {
    let mut points = vec![Vec::new()];
    for (_, values, _) in axes {
        points = points
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    points
}

pub fn run_sweep(manifest_path: &Path, out: &Path) -> Result<SweepOutcome, CliError> {
    let text = fs::read_to_string(manifest_path).map_err(|e| CliError::Io(manifest_path.to_path_buf(), e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| CliError::Json(manifest_path.to_path_buf(), e))?;
    let axes = manifest.axes.active()?;
    let base_path = manifest_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&manifest.scenario);
    let base = ScenarioDoc::from_path(&base_path)?;
    fs::create_dir_all(out).map_err(|e| CliError::Io(out.to_path_buf(), e))?;

    let points = grid(&axes);
    let width = points.len().saturating_sub(1).to_string().len().max(3);
    let rows: Vec<Row> = points
        .par_iter()
        .enumerate()
        .map(|(i, values)| {
            let mut doc = base.clone();
            for ((_, _, set), &v) in axes.iter().zip(values) {
                set(&mut doc, v);
            }
            let dir = out.join(format!("run_{i:0width$}"));
            let result = Scenario::from_doc(&doc)
                .map_err(CliError::from)
                .and_then(|sc| run_to_dir_with_summary(&sc, manifest.oracle, &dir));
            match result {
                Ok((status, summary)) => Row {
                    values: values.clone(),
                    status: match status {
                        RunStatus::Completed => "completed",
                        RunStatus::OracleFailed => "oracle_nonconvergence",
                        RunStatus::Diverged => "diverged",
                    }
                    .to_string(),
                    summary: Some(summary),
                    message: None,
                },
                Err(e) => {
                    log::warn!("sweep point {i}: {e}");
                    Row {
                        values: values.clone(),
                        status: "config_error".to_string(),
                        summary: None,
                        message: Some(e.to_string()),
                    }
                }
            }
        })
        .collect();

    let index = out.join("index.csv");
    let file = File::create(&index).map_err(|e| CliError::Io(index.clone(), e))?;
    let mut w = csv::Writer::from_writer(file);
    let csv_err = |e: csv::Error| CliError::Csv(index.clone(), e);
    let mut header: Vec<String> = vec!["run".into()];
    header.extend(axes.iter().map(|(name, _, _)| name.to_string()));
    header.extend(
        [
            "status",
            "max_state_norm",
            "final_state_norm",
            "ultimate_bound_estimate",
            "control_energy",
            "final_abs_delta",
            "critic_error",
            "actor1_error",
            "actor2_error",
            "divergence_time",
            "message",
        ]
        .map(String::from),
    );
    w.write_record(&header).map_err(csv_err)?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
    for (i, row) in rows.iter().enumerate() {
        let mut rec = vec![format!("run_{i:0width$}")];
        rec.extend(row.values.iter().map(|v| v.to_string()));
        rec.push(row.status.clone());
        let s = row.summary.as_ref();
        let m = s.map(|s| &s.metrics);
        let e = s.and_then(|s| s.weight_errors.as_ref());
        rec.extend([
            opt(m.map(|m| m.max_state_norm)),
            opt(m.map(|m| m.final_state_norm)),
            opt(m.map(|m| m.ultimate_bound_estimate)),
            opt(m.map(|m| m.control_energy)),
            opt(m.map(|m| m.final_abs_delta)),
            opt(e.map(|e| e.critic_error)),
            opt(e.map(|e| e.actor1_error)),
            opt(e.map(|e| e.actor2_error)),
            opt(s.and_then(|s| s.divergence.as_ref()).map(|d| d.time)),
            row.message
                .clone()
                .or_else(|| s.and_then(|s| s.oracle_error.clone()))
                .unwrap_or_default(),
        ]);
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::Io(index.clone(), e))?;

    Ok(SweepOutcome {
        rows: rows.len(),
        any_failed: rows
            .iter()
            .any(|r| r.status == "diverged" || r.status == "oracle_nonconvergence"),
        any_config_error: rows.iter().any(|r| r.status == "config_error"),
    })
}
