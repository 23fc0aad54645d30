use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::trajectory::TrajectoryLog;

/// Fraction of the run, counted from the end, used for the ultimate-bound
/// estimate.
pub const TAIL_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub max_state_norm: f64,
    pub final_state_norm: f64,
    /// Largest state norm over the final fifth of the run.
    pub ultimate_bound_estimate: f64,
    /// Trapezoidal `int u1' R u1 dt`.
    pub control_energy: f64,
    pub max_abs_delta: f64,
    pub final_abs_delta: f64,
    pub max_actor_norm: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn metrics(log: &TrajectoryLog, r: &DMatrix<f64>) -> Metrics {
    let rows = &log.rows;
    let Some(last) = rows.last() else {
        return Metrics {
            max_state_norm: 0.0,
            final_state_norm: 0.0,
            ultimate_bound_estimate: 0.0,
            control_energy: 0.0,
            max_abs_delta: 0.0,
            final_abs_delta: 0.0,
            max_actor_norm: 0.0,
        };
    };
    let t0 = rows[0].t;
    let tail_start = last.t - TAIL_FRACTION * (last.t - t0);
    let power = |u: &[f64]| {
        let u = DVector::from_column_slice(u);
        u.dot(&(r * &u))
    };
    let mut energy = 0.0;
    for pair in rows.windows(2) {
        energy += 0.5 * (pair[1].t - pair[0].t) * (power(&pair[0].u1) + power(&pair[1].u1));
    }
    Metrics {
        max_state_norm: rows.iter().map(|r| norm(&r.zeta)).fold(0.0, f64::max),
        final_state_norm: norm(&last.zeta),
        ultimate_bound_estimate: rows
            .iter()
            .filter(|r| r.t >= tail_start - 1e-12)
            .map(|r| norm(&r.zeta))
            .fold(0.0, f64::max),
        control_energy: energy,
        max_abs_delta: rows.iter().map(|r| r.delta.abs()).fold(0.0, f64::max),
        final_abs_delta: last.delta.abs(),
        max_actor_norm: rows.iter().map(|r| r.wa1_norm.max(r.wa2_norm)).fold(0.0, f64::max),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::trajectory::LogRow;

    fn row(t: f64, zeta: Vec<f64>, u1: Vec<f64>) -> LogRow {
        LogRow {
            t,
            zeta,
            u1,
            u2_hat: vec![0.0],
            tau_d: vec![0.0],
            delta: 0.0,
            wc_norm: 0.0,
            wa1_norm: 0.0,
            wa2_norm: 0.0,
        }
    }

    #[test]
    fn zero_log_gives_zero_metrics() {
        let mut log = TrajectoryLog::new(2, 1, 1);
        for k in 0..5 {
            log.rows.push(row(k as f64 * 0.1, vec![0.0, 0.0], vec![0.0]));
        }
        let m = metrics(&log, &DMatrix::identity(1, 1));
        assert_eq!(m.max_state_norm, 0.0);
        assert_eq!(m.control_energy, 0.0);
        assert_eq!(m.ultimate_bound_estimate, 0.0);
        assert_eq!(metrics(&TrajectoryLog::default(), &DMatrix::identity(1, 1)).max_abs_delta, 0.0);
    }

    #[test]
    fn constant_unit_control_energy_is_duration() {
        let mut log = TrajectoryLog::new(2, 2, 2);
        for k in 0..=40 {
            log.rows.push(row(k as f64 * 0.05, vec![1.0, 0.0], vec![1.0, 0.0]));
        }
        let m = metrics(&log, &DMatrix::identity(2, 2));
        assert!((m.control_energy - 2.0).abs() < 1e-12);
        assert_eq!(m.final_state_norm, 1.0);
    }

    #[test]
    fn ultimate_bound_uses_the_tail() {
        let mut log = TrajectoryLog::new(1, 1, 1);
        for k in 0..=10 {
            let x = if k < 8 { 5.0 } else { 0.5 };
            log.rows.push(row(k as f64, vec![x], vec![0.0]));
        }
        let m = metrics(&log, &DMatrix::identity(1, 1));
        assert_eq!(m.max_state_norm, 5.0);
        assert_eq!(m.ultimate_bound_estimate, 0.5);
    }
}
