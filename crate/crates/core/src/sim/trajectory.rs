use std::io::Write;

use serde::Serialize;

use crate::learner::RankReport;

/// One logged instant.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub zeta: Vec<f64>,
    pub u1: Vec<f64>,
    /// The learner's worst-case disturbance estimate; never applied.
    pub u2_hat: Vec<f64>,
    /// The disturbance actually acting on the plant.
    pub tau_d: Vec<f64>,
    pub delta: f64,
    pub wc_norm: f64,
    pub wa1_norm: f64,
    pub wa2_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankSnapshot {
    pub t: f64,
    pub report: RankReport,
}

/// Rows on a uniform time grid, endpoints included.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryLog {
    pub state_dim: usize,
    pub input_dim: usize,
    pub disturbance_dim: usize,
    pub rows: Vec<LogRow>,
    pub rank_snapshots: Vec<RankSnapshot>,
}

impl TrajectoryLog {
    pub fn new(state_dim: usize, input_dim: usize, disturbance_dim: usize) -> Self {
        Self {
            state_dim,
            input_dim,
            disturbance_dim,
            rows: Vec::new(),
            rank_snapshots: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&LogRow> {
        self.rows.last()
    }

    /// CSV columns: `t`, `zeta_0..`, `u1_0..`, `u2hat_0..`, `taud_0..`,
    /// `delta`, `wc_norm`, `wa1_norm`, `wa2_norm`.
    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        h.extend((0..self.state_dim).map(|i| format!("zeta_{i}")));
        h.extend((0..self.input_dim).map(|i| format!("u1_{i}")));
        h.extend((0..self.input_dim).map(|i| format!("u2hat_{i}")));
        h.extend((0..self.disturbance_dim).map(|i| format!("taud_{i}")));
        h.extend(["delta", "wc_norm", "wa1_norm", "wa2_norm"].map(String::from));
        h
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.header())?;
        for row in &self.rows {
            let mut rec = Vec::with_capacity(self.header().len());
            rec.push(row.t);
            rec.extend(&row.zeta);
            rec.extend(&row.u1);
            rec.extend(&row.u2_hat);
            rec.extend(&row.tau_d);
            rec.extend([row.delta, row.wc_norm, row.wa1_norm, row.wa2_norm]);
            w.write_record(rec.iter().map(|v| format!("{v:e}")))?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_header_and_rows() {
        let mut log = TrajectoryLog::new(2, 1, 1);
        log.rows.push(LogRow {
            t: 0.0,
            zeta: vec![1.0, 2.0],
            u1: vec![0.5],
            u2_hat: vec![0.1],
            tau_d: vec![0.0],
            delta: 0.25,
            wc_norm: 1.0,
            wa1_norm: 2.0,
            wa2_norm: 3.0,
        });
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "t,zeta_0,zeta_1,u1_0,u2hat_0,taud_0,delta,wc_norm,wa1_norm,wa2_norm"
        );
        let values: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(values, vec![0.0, 1.0, 2.0, 0.5, 0.1, 0.0, 0.25, 1.0, 2.0, 3.0]);
        assert!(lines.next().is_none());
    }

    #[test]
    fn empty_log_still_writes_header() {
        let log = TrajectoryLog::new(1, 1, 1);
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1);
    }
}
