//! Concurrent-learning critic, projected actors and the sampled data set
//! that replaces persistence of excitation.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::Basis;
use crate::error::{GameError, LearnerError};
use crate::game::GameCost;
use crate::plant::{AffineDynamics, ControlAffine};
use crate::value::{bellman_from_jacobian, BellmanEval, WeightSet};

/// Default width of the projection boundary layer, as a fraction of `W_bar`.
pub const DEFAULT_PROJECTION_MARGIN: f64 = 0.05;

/// Relative eigenvalue threshold below which the Gram sum is rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerGains {
    pub eta_c: f64,
    pub eta_a1: f64,
    pub eta_a2: f64,
}

impl LearnerGains {
    pub fn new(eta_c: f64, eta_a1: f64, eta_a2: f64) -> Result<Self, GameError> {
        let gains = Self {
            eta_c,
            eta_a1,
            eta_a2,
        };
        gains.validate()?;
        Ok(gains)
    }

    /// All gains zero: the weights stay where they start. Only meant for
    /// plant-only runs and tests.
    pub fn frozen() -> Self {
        Self {
            eta_c: 0.0,
            eta_a1: 0.0,
            eta_a2: 0.0,
        }
    }

    pub fn is_frozen(&self) -> bool {
        self.eta_c == 0.0 && self.eta_a1 == 0.0 && self.eta_a2 == 0.0
    }

    pub fn validate(&self) -> Result<(), GameError> {
        if self.is_frozen() {
            return Ok(());
        }
        for (name, v) in [
            ("eta_c", self.eta_c),
            ("eta_a1", self.eta_a1),
            ("eta_a2", self.eta_a2),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(GameError::InvalidGains(format!(
                    "{name} must be finite and strictly positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleStrategy {
    Grid,
    LatinHypercube,
}

/// Axis-aligned box the sample points are drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleDomain {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl SampleDomain {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self, LearnerError> {
        if lower.len() != upper.len() {
            return Err(LearnerError::InvalidDomain(format!(
                "lower has {} entries, upper has {}",
                lower.len(),
                upper.len()
            )));
        }
        for i in 0..lower.len() {
            if !(lower[i].is_finite() && upper[i].is_finite()) || lower[i] > upper[i] {
                return Err(LearnerError::InvalidDomain(format!(
                    "axis {i}: [{}, {}] is not a finite interval",
                    lower[i], upper[i]
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The box `[-half_width, half_width]^n`.
    pub fn symmetric(n: usize, half_width: f64) -> Result<Self, LearnerError> {
        Self::new(
            DVector::from_element(n, -half_width),
            DVector::from_element(n, half_width),
        )
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        x.len() == self.dim() && (0..x.len()).all(|i| x[i] >= self.lower[i] && x[i] <= self.upper[i])
    }
}

/// Weight-independent data cached at one sample point.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePoint {
    pub zeta: DVector<f64>,
    /// Multiplicity of this point in the sums.
    pub weight: f64,
    pub dsigma: DMatrix<f64>,
    pub dynamics: AffineDynamics,
}

/// Sampled states plus their Bellman errors at the most recent refresh.
#[derive(Debug, Clone)]
pub struct SampleSet {
    points: Vec<SamplePoint>,
    evals: Vec<BellmanEval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub rank: usize,
    /// Smallest eigenvalue of `sum_j w_j omega_j omega_j' / p_j`, clipped at 0.
    pub c_lower: f64,
    pub c_upper: f64,
    pub m: usize,
}

impl RankReport {
    pub fn full_rank(&self) -> bool {
        self.rank == self.m
    }
}

impl SampleSet {
    /// Build from explicit points. No minimum count is enforced here.
    pub fn from_points(
        points: &[DVector<f64>],
        multiplicities: Option<&[f64]>,
        plant: &dyn ControlAffine,
        basis: &dyn Basis,
    ) -> Result<Self, LearnerError> {
        let mut out = Vec::with_capacity(points.len());
        for (j, zeta) in points.iter().enumerate() {
            plant.check_state(zeta)?;
            let dynamics = plant.affine(zeta)?;
            out.push(SamplePoint {
                zeta: zeta.clone(),
                weight: multiplicities.map_or(1.0, |w| w[j]),
                dsigma: basis.jacobian(zeta),
                dynamics,
            });
        }
        let m = basis.len();
        let evals = out
            .iter()
            .map(|pt| BellmanEval {
                delta: 0.0,
                omega: DVector::zeros(m),
                p: 1.0,
                u1: DVector::zeros(pt.dynamics.g.ncols()),
                u2: DVector::zeros(pt.dynamics.g.ncols()),
            })
            .collect();
        Ok(Self { points: out, evals })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[SamplePoint] {
        &self.points
    }

    pub fn evals(&self) -> &[BellmanEval] {
        &self.evals
    }

    /// Recompute `omega_j`, `p_j` and `delta_j` at the given weights.
    pub fn refresh(&mut self, weights: &WeightSet, cost: &GameCost) {
        self.evals = self
            .points
            .par_iter()
            .map(|pt| bellman_from_jacobian(&pt.zeta, &pt.dsigma, weights, &pt.dynamics, cost))
            .collect();
    }

    /// Weighted sum `sum_j w_j omega_j omega_j' / p_j` of the last refresh.
    pub fn gram(&self) -> DMatrix<f64> {
        let m = self.evals.first().map_or(0, |e| e.omega.len());
        let mut gram = DMatrix::zeros(m, m);
        for (pt, e) in self.points.iter().zip(&self.evals) {
            gram.ger(pt.weight / e.p, &e.omega, &e.omega, 1.0);
        }
        gram
    }

    /// Eigen-analysis of the Gram sum from the last refresh.
    pub fn rank_report(&self) -> RankReport {
        let gram = self.gram();
        let m = gram.nrows();
        if m == 0 {
            return RankReport {
                rank: 0,
                c_lower: 0.0,
                c_upper: 0.0,
                m,
            };
        }
        let eig = SymmetricEigen::new((&gram + gram.transpose()) * 0.5).eigenvalues;
        let c_upper = eig.max().max(0.0);
        let rank = if c_upper > 0.0 {
            eig.iter().filter(|v| **v > RANK_TOLERANCE * c_upper).count()
        } else {
            0
        };
        RankReport {
            rank,
            c_lower: eig.min().max(0.0),
            c_upper,
            m,
        }
    }

    /// Sum of the concurrent terms `sum_j w_j (omega_j / p_j) delta_j`.
    pub fn gradient_sum(&self) -> DVector<f64> {
        let m = self.evals.first().map_or(0, |e| e.omega.len());
        let mut acc = DVector::zeros(m);
        for (pt, e) in self.points.iter().zip(&self.evals) {
            acc.axpy(pt.weight * e.delta / e.p, &e.omega, 1.0);
        }
        acc
    }
}

/// Draw `count` sample points from `domain` and cache the plant and basis
/// data at each.
pub fn build_sample_set(
    domain: &SampleDomain,
    count: usize,
    strategy: SampleStrategy,
    seed: u64,
    plant: &dyn ControlAffine,
    basis: &dyn Basis,
) -> Result<SampleSet, LearnerError> {
    let m = basis.len();
    if count < m {
        return Err(LearnerError::TooFewSamples { count, m });
    }
    if domain.dim() != plant.state_dim() || basis.state_dim() != plant.state_dim() {
        return Err(LearnerError::InvalidDomain(format!(
            "domain dimension {} / basis dimension {} do not match state dimension {}",
            domain.dim(),
            basis.state_dim(),
            plant.state_dim()
        )));
    }
    let points = match strategy {
        SampleStrategy::Grid => grid_points(domain, count),
        SampleStrategy::LatinHypercube => latin_hypercube(domain, count, seed),
    };
    SampleSet::from_points(&points, None, plant, basis)
}

/// `count` points from a tensor grid with `ceil(count^(1/n))` levels per
/// axis, taken at evenly strided flat indices.
fn grid_points(domain: &SampleDomain, count: usize) -> Vec<DVector<f64>> {
    let n = domain.dim();
    let mut levels = 1usize;
    while levels.checked_pow(n as u32).is_some_and(|t| t < count) {
        levels += 1;
    }
    let total = (levels as u128).pow(n as u32);
    let coord = |i: usize, level: usize| {
        if levels == 1 {
            0.5 * (domain.lower[i] + domain.upper[i])
        } else {
            let t = level as f64 / (levels - 1) as f64;
            domain.lower[i] + t * (domain.upper[i] - domain.lower[i])
        }
    };
    (0..count)
        .map(|k| {
            let mut flat = k as u128 * total / count as u128;
            DVector::from_fn(n, |i, _| {
                let level = (flat % levels as u128) as usize;
                flat /= levels as u128;
                coord(i, level)
            })
        })
        .collect()
}

fn latin_hypercube(domain: &SampleDomain, count: usize, seed: u64) -> Vec<DVector<f64>> {
    let n = domain.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut columns = Vec::with_capacity(n);
    for i in 0..n {
        let mut strata: Vec<usize> = (0..count).collect();
        strata.shuffle(&mut rng);
        let width = domain.upper[i] - domain.lower[i];
        let col: Vec<f64> = strata
            .into_iter()
            .map(|s| {
                let u: f64 = rng.random();
                domain.lower[i] + width * (s as f64 + u) / count as f64
            })
            .collect();
        columns.push(col);
    }
    (0..count)
        .map(|k| DVector::from_fn(n, |i, _| columns[i][k]))
        .collect()
}

/// Refresh the samples at `weights` and analyse the Gram sum.
pub fn rank_check(samples: &mut SampleSet, weights: &WeightSet, cost: &GameCost) -> RankReport {
    samples.refresh(weights, cost);
    samples.rank_report()
}

/// `-eta_c (omega / p) delta - eta_c sum_j (omega_j / p_j) delta_j`.
///
/// `samples` must have been refreshed at the current weights.
pub fn critic_derivative(live: &BellmanEval, samples: &SampleSet, gains: &LearnerGains) -> DVector<f64> {
    let mut d = samples.gradient_sum();
    if d.is_empty() {
        d = DVector::zeros(live.omega.len());
    }
    d.axpy(live.delta / live.p, &live.omega, 1.0);
    d * -gains.eta_c
}

/// Smoothly projected actor law `proj{-eta_a (Wa - Wc)}`.
///
/// Inside the ball of radius `(1 - margin) W_bar` this is the raw law. In the
/// boundary layer the outward radial part of the raw vector is removed with
/// a smoothstep weight that reaches one at `W_bar`, so the norm of the actor
/// weights cannot grow past `W_bar` under the exact flow.
pub fn actor_derivative(
    wa: &DVector<f64>,
    wc: &DVector<f64>,
    eta_a: f64,
    w_bar: f64,
    margin: f64,
) -> DVector<f64> {
    let raw = (wa - wc) * -eta_a;
    let r2 = wa.norm_squared();
    let inner = (1.0 - margin) * w_bar;
    if r2 <= inner * inner {
        return raw;
    }
    let outward = raw.dot(wa);
    if outward <= 0.0 {
        return raw;
    }
    let t = ((r2.sqrt() - inner) / (margin * w_bar)).clamp(0.0, 1.0);
    let s = t * t * (3.0 - 2.0 * t);
    let scale = s * outward / r2;
    raw - wa * scale
}

/// Radial clamp applied after each integration step to absorb the
/// discretization overshoot of the projected flow.
pub fn clamp_to_ball(w: &mut DVector<f64>, w_bar: f64) {
    let n = w.norm();
    if n > w_bar {
        *w *= w_bar / n;
    }
}

/// Time derivatives of all three weight vectors at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightRates {
    pub wc: DVector<f64>,
    pub wa1: DVector<f64>,
    pub wa2: DVector<f64>,
}

/// The full learning law evaluated at the live state.
#[derive(Debug, Clone)]
pub struct Learner {
    pub basis: Arc<dyn Basis>,
    pub gains: LearnerGains,
    pub projection_margin: f64,
}

impl Learner {
    pub fn new(basis: Arc<dyn Basis>, gains: LearnerGains) -> Self {
        Self {
            basis,
            gains,
            projection_margin: DEFAULT_PROJECTION_MARGIN,
        }
    }

    /// Live Bellman error and the weight rates. `samples` must already be
    /// refreshed at `weights`.
    pub fn rates(
        &self,
        zeta: &DVector<f64>,
        dynamics: &AffineDynamics,
        weights: &WeightSet,
        samples: &SampleSet,
        cost: &GameCost,
    ) -> (BellmanEval, WeightRates) {
        let dsigma = self.basis.jacobian(zeta);
        let live = bellman_from_jacobian(zeta, &dsigma, weights, dynamics, cost);
        let wc = critic_derivative(&live, samples, &self.gains);
        let wa1 = actor_derivative(
            &weights.wa1,
            &weights.wc,
            self.gains.eta_a1,
            weights.w_bar,
            self.projection_margin,
        );
        let wa2 = actor_derivative(
            &weights.wa2,
            &weights.wc,
            self.gains.eta_a2,
            weights.w_bar,
            self.projection_margin,
        );
        (live, WeightRates { wc, wa1, wa2 })
    }
}
