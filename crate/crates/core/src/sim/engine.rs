//! Fixed-step RK4 integration of the plant together with the learning laws.

use log::{debug, warn};
use nalgebra::DVector;
use serde::Serialize;
use thiserror::Error;

use super::metrics::{metrics, Metrics};
use super::scenario::{Scenario, ScenarioError};
use super::trajectory::{LogRow, RankSnapshot, TrajectoryLog};
use crate::learner::{build_sample_set, clamp_to_ball, rank_check, Learner, RankReport, SampleSet, WeightRates};
use crate::lq::{compare_weights, PolicyProbe, WeightComparison};
use crate::plant::ControlAffine;
use crate::value::{BellmanEval, WeightSet};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Setup(#[from] ScenarioError),
    #[error("run diverged at t = {time}: {reason}")]
    Diverged {
        time: f64,
        reason: String,
        log: Box<TrajectoryLog>,
    },
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Compare the final weights with the game Riccati weights.
    pub attach_oracle: bool,
}

#[derive(Debug, Clone)]
pub enum OracleOutcome {
    Compared {
        ideal: DVector<f64>,
        comparison: WeightComparison,
    },
    Failed(String),
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub log: TrajectoryLog,
    pub final_state: DVector<f64>,
    pub final_weights: WeightSet,
    pub initial_rank: RankReport,
    pub oracle: Option<OracleOutcome>,
}

/// Plant state plus all three weight vectors.
#[derive(Debug, Clone)]
struct Augmented {
    zeta: DVector<f64>,
    w: WeightSet,
}

struct Rates {
    zeta: DVector<f64>,
    w: WeightRates,
}

impl Augmented {
    fn plus(&self, k: &Rates, h: f64) -> Self {
        Self {
            zeta: &self.zeta + &k.zeta * h,
            w: WeightSet {
                wc: &self.w.wc + &k.w.wc * h,
                wa1: &self.w.wa1 + &k.w.wa1 * h,
                wa2: &self.w.wa2 + &k.w.wa2 * h,
                w_bar: self.w.w_bar,
            },
        }
    }
}

/// Classical RK4 combination `(k1 + 2 k2 + 2 k3 + k4) / 6`.
fn combine(k: [&Rates; 4]) -> Rates {
    let mix = |a: &DVector<f64>, b: &DVector<f64>, c: &DVector<f64>, d: &DVector<f64>| (a + b * 2.0 + c * 2.0 + d) / 6.0;
    Rates {
        zeta: mix(&k[0].zeta, &k[1].zeta, &k[2].zeta, &k[3].zeta),
        w: WeightRates {
            wc: mix(&k[0].w.wc, &k[1].w.wc, &k[2].w.wc, &k[3].w.wc),
            wa1: mix(&k[0].w.wa1, &k[1].w.wa1, &k[2].w.wa1, &k[3].w.wa1),
            wa2: mix(&k[0].w.wa2, &k[1].w.wa2, &k[2].w.wa2, &k[3].w.wa2),
        },
    }
}

struct Evaluation {
    rates: Rates,
    live: BellmanEval,
    tau_d: DVector<f64>,
}

struct Engine<'a> {
    sc: &'a Scenario,
    learner: Learner,
    samples: SampleSet,
    learning: bool,
}

impl Engine<'_> {
    fn eval(&mut self, t: f64, y: &Augmented, refresh: bool) -> Result<Evaluation, String> {
        let plant = self.sc.plant.as_ref();
        let dynamics = plant.affine(&y.zeta).map_err(|e| e.to_string())?;
        if refresh && self.learning {
            self.samples.refresh(&y.w, &self.sc.cost);
        }
        let (live, w) = self.learner.rates(&y.zeta, &dynamics, &y.w, &self.samples, &self.sc.cost);
        let tau_d = self.sc.disturbance.at(t);
        let d = plant.disturbance_input(&y.zeta, &tau_d).map_err(|e| e.to_string())?;
        let zeta = &dynamics.f + &dynamics.g * (&live.u1 + d);
        Ok(Evaluation {
            rates: Rates { zeta, w },
            live,
            tau_d,
        })
    }

    fn row(t: f64, y: &Augmented, e: &Evaluation) -> LogRow {
        LogRow {
            t,
            zeta: y.zeta.as_slice().to_vec(),
            u1: e.live.u1.as_slice().to_vec(),
            u2_hat: e.live.u2.as_slice().to_vec(),
            tau_d: e.tau_d.as_slice().to_vec(),
            delta: e.live.delta,
            wc_norm: y.w.wc.norm(),
            wa1_norm: y.w.wa1.norm(),
            wa2_norm: y.w.wa2.norm(),
        }
    }

    fn rank_now(&self, y: &Augmented, fresh: bool) -> RankReport {
        if fresh && self.learning {
            self.samples.rank_report()
        } else {
            let mut probe = self.samples.clone();
            rank_check(&mut probe, &y.w, &self.sc.cost)
        }
    }
}

/// Integrate the scenario from `t = 0` to its duration.
pub fn run(sc: &Scenario, options: RunOptions) -> Result<RunOutput, SimError> {
    let plant = sc.plant.as_ref();
    let samples = build_sample_set(
        &sc.sample_domain,
        sc.sample_count,
        sc.sample_strategy,
        sc.sample_seed,
        plant,
        sc.basis.as_ref(),
    )
    .map_err(ScenarioError::from)?;
    let mut learner = Learner::new(sc.basis.clone(), sc.gains);
    learner.projection_margin = sc.projection_margin;
    let mut engine = Engine {
        sc,
        learner,
        samples,
        learning: !sc.gains.is_frozen(),
    };

    let mut y = Augmented {
        zeta: sc.initial_state.clone(),
        w: sc.initial_weights()?,
    };
    let mut log = TrajectoryLog::new(plant.state_dim(), plant.input_dim(), sc.disturbance.dim());

    let initial_rank = engine.rank_now(&y, false);
    if !initial_rank.full_rank() {
        warn!(
            "sample Gram matrix has rank {} of {} at t = 0 (c_lower = {:e})",
            initial_rank.rank, initial_rank.m, initial_rank.c_lower
        );
    }
    log.rank_snapshots.push(RankSnapshot {
        t: 0.0,
        report: initial_rank.clone(),
    });

    let dt = sc.dt;
    let per_stage = sc.refresh_every == 1;
    let diverged = |time: f64, reason: String, log: TrajectoryLog| SimError::Diverged {
        time,
        reason,
        log: Box::new(log),
    };

    for step in 0..sc.steps {
        let t = step as f64 * dt;
        let fresh = per_stage || step % sc.refresh_every == 0;
        let k1 = match engine.eval(t, &y, fresh) {
            Ok(k) => k,
            Err(reason) => return Err(diverged(t, reason, log)),
        };
        log.rows.push(Engine::row(t, &y, &k1));
        if step > 0 && sc.rank_every > 0 && step % sc.rank_every == 0 {
            log.rank_snapshots.push(RankSnapshot {
                t,
                report: engine.rank_now(&y, fresh),
            });
        }

        let mut stages = Vec::with_capacity(3);
        for (h, tt) in [(0.5 * dt, t + 0.5 * dt), (0.5 * dt, t + 0.5 * dt), (dt, t + dt)] {
            let prev = stages.last().map_or(&k1.rates, |e: &Evaluation| &e.rates);
            let yi = y.plus(prev, h);
            match engine.eval(tt, &yi, per_stage) {
                Ok(k) => stages.push(k),
                Err(reason) => return Err(diverged(t, reason, log)),
            }
        }
        let incr = combine([&k1.rates, &stages[0].rates, &stages[1].rates, &stages[2].rates]);
        y = y.plus(&incr, dt);
        clamp_to_ball(&mut y.w.wa1, y.w.w_bar);
        clamp_to_ball(&mut y.w.wa2, y.w.w_bar);

        let t_next = (step + 1) as f64 * dt;
        let norm = y.zeta.norm();
        if !norm.is_finite() || !y.w.is_finite() {
            return Err(diverged(t_next, "non-finite state or weights".into(), log));
        }
        if norm > sc.divergence_bound {
            return Err(diverged(
                t_next,
                format!("state norm {norm:e} exceeds bound {:e}", sc.divergence_bound),
                log,
            ));
        }
    }

    let t_end = sc.steps as f64 * dt;
    let fresh = per_stage || sc.steps.is_multiple_of(sc.refresh_every);
    match engine.eval(t_end, &y, fresh) {
        Ok(k) => log.rows.push(Engine::row(t_end, &y, &k)),
        Err(reason) => return Err(diverged(t_end, reason, log)),
    }
    debug!("{}: {} rows, final |zeta| = {:e}", sc.name, log.len(), y.zeta.norm());

    let oracle = options.attach_oracle.then(|| match sc.oracle() {
        Ok((_, ideal)) => {
            let probe = PolicyProbe {
                plant,
                basis: sc.basis.as_ref(),
                cost: &sc.cost,
                radius: sc.initial_state.norm().max(1.0),
                count: 200,
                seed: sc.seed,
            };
            let comparison = compare_weights(&y.w, &ideal, Some(&probe));
            OracleOutcome::Compared { ideal, comparison }
        }
        Err(e) => {
            warn!("{}: oracle unavailable: {e}", sc.name);
            OracleOutcome::Failed(e.to_string())
        }
    });

    Ok(RunOutput {
        log,
        final_state: y.zeta,
        final_weights: y.w,
        initial_rank,
        oracle,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FinalWeights {
    pub wc: Vec<f64>,
    pub wa1: Vec<f64>,
    pub wa2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Divergence {
    pub time: f64,
    pub reason: String,
}

/// Machine-readable outcome of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub name: String,
    pub status: String,
    pub dt: f64,
    pub duration: f64,
    pub rows: usize,
    pub metrics: Metrics,
    pub initial_rank: Option<RankReport>,
    pub final_weights: Option<FinalWeights>,
    pub ideal_weights: Option<Vec<f64>>,
    pub weight_errors: Option<WeightComparison>,
    pub oracle_error: Option<String>,
    pub ultimate_bound: Option<f64>,
    pub within_ultimate_bound: Option<bool>,
    pub divergence: Option<Divergence>,
}

impl Summary {
    pub fn completed(sc: &Scenario, out: &RunOutput) -> Self {
        let m = metrics(&out.log, sc.cost.r());
        let (ideal_weights, weight_errors, oracle_error) = match &out.oracle {
            Some(OracleOutcome::Compared { ideal, comparison }) => {
                (Some(ideal.as_slice().to_vec()), Some(comparison.clone()), None)
            }
            Some(OracleOutcome::Failed(e)) => (None, None, Some(e.clone())),
            None => (None, None, None),
        };
        Self {
            name: sc.name.clone(),
            status: if oracle_error.is_some() { "oracle_nonconvergence" } else { "completed" }.into(),
            dt: sc.dt,
            duration: sc.duration,
            rows: out.log.len(),
            within_ultimate_bound: sc.ultimate_bound.map(|b| m.ultimate_bound_estimate < b),
            metrics: m,
            initial_rank: Some(out.initial_rank.clone()),
            final_weights: Some(FinalWeights {
                wc: out.final_weights.wc.as_slice().to_vec(),
                wa1: out.final_weights.wa1.as_slice().to_vec(),
                wa2: out.final_weights.wa2.as_slice().to_vec(),
            }),
            ideal_weights,
            weight_errors,
            oracle_error,
            ultimate_bound: sc.ultimate_bound,
            divergence: None,
        }
    }

    pub fn diverged(sc: &Scenario, time: f64, reason: &str, log: &TrajectoryLog) -> Self {
        Self {
            name: sc.name.clone(),
            status: "diverged".into(),
            dt: sc.dt,
            duration: sc.duration,
            rows: log.len(),
            metrics: metrics(log, sc.cost.r()),
            initial_rank: log.rank_snapshots.first().map(|s| s.report.clone()),
            final_weights: None,
            ideal_weights: None,
            weight_errors: None,
            oracle_error: None,
            ultimate_bound: sc.ultimate_bound,
            within_ultimate_bound: None,
            divergence: Some(Divergence {
                time,
                reason: reason.to_string(),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::LearnerGains;
    use crate::sim::scenario::{ScenarioDoc, WeightInitSpec};

    fn lq_doc() -> ScenarioDoc {
        ScenarioDoc::from_json_str(
            r#"{
                "plant": {"kind": "benchmark", "name": "double_integrator"},
                "initial_state": [0.5, -0.3],
                "duration": 0.1,
                "dt": 0.01,
                "cost": {"q": 1.0, "r": 1.0, "gamma": 2.0},
                "gains": {"eta_c": 5.0, "eta_a1": 2.0, "eta_a2": 2.0},
                "samples": {"count": 12, "half_width": 1.0, "seed": 3},
                "weights": {"kind": "uniform", "low": 0.5, "high": 1.5},
                "w_bar": 10.0
            }"#,
            "inline",
        )
        .unwrap()
    }

    #[test]
    fn grid_has_inclusive_endpoints() {
        let sc = Scenario::from_doc(&lq_doc()).unwrap();
        let out = run(&sc, RunOptions::default()).unwrap();
        assert_eq!(out.log.len(), 11);
        assert_eq!(out.log.rows[0].t, 0.0);
        assert!((out.log.rows[10].t - 0.1).abs() < 1e-15);
    }

    #[test]
    fn equilibrium_is_kept_exactly() {
        let mut d = lq_doc();
        d.initial_state = vec![0.0, 0.0];
        d.weights = WeightInitSpec::Values { values: vec![0.0; 3] };
        let sc = Scenario::from_doc(&d).unwrap();
        let out = run(&sc, RunOptions::default()).unwrap();
        assert!(out.log.rows.iter().all(|r| r.zeta.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn repeated_runs_are_identical() {
        let sc = Scenario::from_doc(&lq_doc()).unwrap();
        let a = run(&sc, RunOptions::default()).unwrap();
        let b = run(&sc, RunOptions::default()).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.final_weights, b.final_weights);
    }

    #[test]
    fn frozen_gains_keep_weights() {
        let mut d = lq_doc();
        d.gains = LearnerGains::frozen();
        let sc = Scenario::from_doc(&d).unwrap();
        let w0 = sc.initial_weights().unwrap();
        let out = run(&sc, RunOptions::default()).unwrap();
        assert_eq!(out.final_weights, w0);
    }

    #[test]
    fn divergence_is_reported_with_partial_log() {
        let mut d = lq_doc();
        // destabilizing weights: positive feedback through the actor
        d.weights = WeightInitSpec::Values { values: vec![0.0, -6.0, -6.0] };
        d.gains = LearnerGains::frozen();
        d.divergence_bound = 5.0;
        d.duration = 20.0;
        let sc = Scenario::from_doc(&d).unwrap();
        match run(&sc, RunOptions::default()) {
            Err(SimError::Diverged { time, log, .. }) => {
                assert!(time > 0.0 && time < 20.0);
                assert!(!log.is_empty());
                let s = Summary::diverged(&sc, time, "x", &log);
                assert_eq!(s.status, "diverged");
            }
            other => panic!("expected divergence, got {:?}", other.map(|o| o.log.len())),
        }
    }

    #[test]
    fn summary_carries_oracle_errors() {
        let sc = Scenario::from_doc(&lq_doc()).unwrap();
        let out = run(&sc, RunOptions { attach_oracle: true }).unwrap();
        let s = Summary::completed(&sc, &out);
        assert_eq!(s.status, "completed");
        assert!(s.weight_errors.is_some());
        assert_eq!(s.rows, 11);
    }

    #[test]
    fn unreachable_gamma_marks_the_oracle() {
        let mut d = lq_doc();
        d.cost.gamma = 0.5;
        let sc = Scenario::from_doc(&d).unwrap();
        let out = run(&sc, RunOptions { attach_oracle: true }).unwrap();
        let s = Summary::completed(&sc, &out);
        assert_eq!(s.status, "oracle_nonconvergence");
        assert!(s.oracle_error.is_some());
    }
}
