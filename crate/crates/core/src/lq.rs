//! Linear-quadratic zero-sum game: the game Riccati equation, its solution by
//! Newton iteration, and conversion to ideal basis weights.
//!
//! For `x' = A x + B (u1 + u2)` and the quadratic cost of [`GameCost`], the
//! value is `x' P x` with
//!
//! `A'P + PA + Q - P B (R^-1 - gamma^-2 I) B' P = 0`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::Basis;
use crate::error::{BasisError, GameError, ModelError, OracleError};
use crate::game::{policies_from_gradient, GameCost};
use crate::plant::{AffineDynamics, ControlAffine};
use crate::value::{policy_hat, Player, WeightSet};
use crate::vehicle::{Auv, VehicleParams};

const NEWTON_TOLERANCE: f64 = 1e-12;
const NEWTON_MAX_ITERATIONS: usize = 100;
const CONTINUATION_STEPS: usize = 10;
/// Required final residual, relative to `max(1, |Q|)`.
pub const ACCEPT_RESIDUAL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearPlant {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
}

impl LinearPlant {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self, OracleError> {
        if !a.is_square() || a.nrows() == 0 {
            return Err(OracleError::InvalidPlant(format!(
                "A must be square and non-empty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != a.nrows() || b.ncols() == 0 {
            return Err(OracleError::InvalidPlant(format!(
                "B must have {} rows and at least one column, got {}x{}",
                a.nrows(),
                b.nrows(),
                b.ncols()
            )));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(OracleError::InvalidPlant("non-finite entry".into()));
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
}

impl ControlAffine for LinearPlant {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    fn affine(&self, state: &DVector<f64>) -> Result<AffineDynamics, ModelError> {
        self.check_state(state)?;
        Ok(AffineDynamics {
            f: &self.a * state,
            g: self.b.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GareSolution {
    pub p: DMatrix<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Weighting matrices of an LQ game. Unlike [`GameCost`], `gamma` may be
/// infinite, which removes the disturbance player.
#[derive(Debug, Clone, PartialEq)]
pub struct LqWeights {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    r_inv: DMatrix<f64>,
    gamma: f64,
}

impl LqWeights {
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>, gamma: f64) -> Result<Self, OracleError> {
        if !(gamma > 0.0) {
            return Err(GameError::InvalidCost(format!("gamma must be positive, got {gamma}")).into());
        }
        // reuse the cost validation for Q and R
        let checked = GameCost::new(q, r, if gamma.is_finite() { gamma } else { 1.0 })?;
        Ok(Self {
            q: checked.q().clone(),
            r: checked.r().clone(),
            r_inv: checked.r_inverse().clone(),
            gamma,
        })
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// The game cost with the same weights; fails for infinite `gamma`.
    pub fn cost(&self) -> Result<GameCost, GameError> {
        GameCost::new(self.q.clone(), self.r.clone(), self.gamma)
    }

    /// `R^-1 - mu I`.
    fn inner(&self, mu: f64) -> DMatrix<f64> {
        let k = self.r.nrows();
        &self.r_inv - DMatrix::identity(k, k) * mu
    }

    fn inv_gamma_sq(&self) -> f64 {
        if self.gamma.is_finite() {
            1.0 / (self.gamma * self.gamma)
        } else {
            0.0
        }
    }
}

impl From<&GameCost> for LqWeights {
    fn from(cost: &GameCost) -> Self {
        Self {
            q: cost.q().clone(),
            r: cost.r().clone(),
            r_inv: cost.r_inverse().clone(),
            gamma: cost.gamma(),
        }
    }
}

/// `|A'P + PA + Q - P S P|_F` with `S = B (R^-1 - gamma^-2 I) B'`.
pub fn gare_residual(plant: &LinearPlant, weights: &LqWeights, p: &DMatrix<f64>) -> f64 {
    riccati_map(&plant.a, &coupling(plant, weights), &weights.q, p).norm()
}

fn coupling(plant: &LinearPlant, weights: &LqWeights) -> DMatrix<f64> {
    &plant.b * weights.inner(weights.inv_gamma_sq()) * plant.b.transpose()
}

fn riccati_map(a: &DMatrix<f64>, s: &DMatrix<f64>, q: &DMatrix<f64>, p: &DMatrix<f64>) -> DMatrix<f64> {
    a.transpose() * p + p * a + q - p * s * p
}

/// Solve `a' X + X a + c = 0` through the Kronecker form.
fn lyapunov(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let at = a.transpose();
    // vec(A'X) = (I kron A') vec X, vec(XA) = (A' kron I) vec X
    let op = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = DVector::from_column_slice(c.as_slice()) * -1.0;
    let x = op.lu().solve(&rhs)?;
    let x = DMatrix::from_column_slice(n, n, x.as_slice());
    Some((&x + x.transpose()) * 0.5)
}

fn is_hurwitz(a: &DMatrix<f64>) -> bool {
    a.complex_eigenvalues().iter().all(|l| l.re < 0.0)
}

/// Bass's construction of a stabilizing feedback `u = -K x`.
fn stabilizing_gain(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    if is_hurwitz(a) {
        return Some(DMatrix::zeros(b.ncols(), n));
    }
    let beta = a.norm() + 1.0;
    // (A + beta I) Z + Z (A + beta I)' = 2 B B'
    let shifted = -(a + DMatrix::identity(n, n) * beta);
    let z = lyapunov(&shifted.transpose(), &(b * b.transpose() * 2.0))?;
    let k = b.transpose() * z.try_inverse()?;
    is_hurwitz(&(a - b * &k)).then_some(k)
}

/// Newton iteration on the game Riccati equation, starting from the LQR
/// solution and stepping the disturbance term in over ten stages of
/// `gamma^-2`. `gamma = inf` gives the plain LQR solution.
pub fn gare_solve(plant: &LinearPlant, cost: &LqWeights) -> Result<GareSolution, OracleError> {
    let n = plant.a.nrows();
    if cost.q.nrows() != n || cost.r.nrows() != plant.b.ncols() {
        return Err(OracleError::InvalidPlant(format!(
            "cost is {}x{} but plant has {} states and {} inputs",
            cost.q.nrows(),
            cost.r.nrows(),
            n,
            plant.b.ncols()
        )));
    }
    let gamma = cost.gamma();
    let fail = |history: Vec<f64>| OracleError::NonConvergence { gamma, history };
    let scale = cost.q().norm().max(1.0);
    let mut history = Vec::new();

    // Kleinman iteration for the LQR solution.
    let mut k = stabilizing_gain(&plant.a, &plant.b).ok_or_else(|| fail(vec![]))?;
    let s_lqr = &plant.b * &cost.r_inv * plant.b.transpose();
    let mut p = DMatrix::zeros(n, n);
    let mut iterations = 0;
    for _ in 0..NEWTON_MAX_ITERATIONS {
        iterations += 1;
        let closed = &plant.a - &plant.b * &k;
        let c = cost.q() + k.transpose() * cost.r() * &k;
        p = lyapunov(&closed, &c).ok_or_else(|| fail(history.clone()))?;
        k = &cost.r_inv * plant.b.transpose() * &p;
        let res = riccati_map(&plant.a, &s_lqr, cost.q(), &p).norm();
        history.push(res);
        if res <= NEWTON_TOLERANCE * scale || stalled(&history) {
            break;
        }
    }

    if gamma.is_finite() {
        for stage in 1..=CONTINUATION_STEPS {
            let mu = stage as f64 / CONTINUATION_STEPS as f64 * cost.inv_gamma_sq();
            let s = &plant.b * cost.inner(mu) * plant.b.transpose();
            let start = history.len();
            for _ in 0..NEWTON_MAX_ITERATIONS {
                iterations += 1;
                let closed = &plant.a - &s * &p;
                if !is_hurwitz(&closed) {
                    return Err(fail(history));
                }
                let c = cost.q() + &p * &s * &p;
                p = lyapunov(&closed, &c).ok_or_else(|| fail(history.clone()))?;
                let res = riccati_map(&plant.a, &s, cost.q(), &p).norm();
                history.push(res);
                if !res.is_finite() {
                    return Err(fail(history));
                }
                if res <= NEWTON_TOLERANCE * scale || stalled(&history[start..]) {
                    break;
                }
            }
        }
    }

    let residual = gare_residual(plant, cost, &p);
    let closed = &plant.a - coupling(plant, cost) * &p;
    if !(residual <= ACCEPT_RESIDUAL * scale) || !is_hurwitz(&closed) {
        history.push(residual);
        return Err(fail(history));
    }
    Ok(GareSolution {
        p,
        residual,
        iterations,
    })
}

/// Newton has reached rounding level when the residual stops shrinking.
fn stalled(history: &[f64]) -> bool {
    let n = history.len();
    n >= 4 && history[n - 1] >= 0.5 * history[n - 3]
}

/// Weights `W` with `W' sigma(x) = x' P x` for the quadratic basis.
pub fn ideal_weights(sol: &GareSolution, basis: &dyn Basis) -> Result<DVector<f64>, OracleError> {
    let q = basis
        .as_quadratic()
        .ok_or_else(|| BasisError::NotQuadratic(basis.name().to_string()))?;
    if q.state_dim() != sol.p.nrows() {
        return Err(BasisError::Dimension {
            basis: q.state_dim(),
            state: sol.p.nrows(),
        }
        .into());
    }
    Ok(q.weights_for(&sol.p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightComparison {
    pub critic_error: f64,
    pub actor1_error: f64,
    pub actor2_error: f64,
    /// Largest policy deviation over the probe ball, when probed.
    pub policy_error: Option<f64>,
}

impl WeightComparison {
    pub fn max_weight_error(&self) -> f64 {
        self.critic_error.max(self.actor1_error).max(self.actor2_error)
    }
}

/// Where to measure the policy error in [`compare_weights`].
pub struct PolicyProbe<'a> {
    pub plant: &'a dyn ControlAffine,
    pub basis: &'a dyn Basis,
    pub cost: &'a GameCost,
    pub radius: f64,
    pub count: usize,
    pub seed: u64,
}

/// Relative weight errors `|W_hat - W| / |W|` and, optionally, the largest
/// deviation of either approximate policy from its ideal counterpart.
pub fn compare_weights(
    learned: &WeightSet,
    ideal: &DVector<f64>,
    probe: Option<&PolicyProbe>,
) -> WeightComparison {
    let denom = ideal.norm().max(f64::MIN_POSITIVE);
    let rel = |w: &DVector<f64>| (w - ideal).norm() / denom;
    WeightComparison {
        critic_error: rel(&learned.wc),
        actor1_error: rel(&learned.wa1),
        actor2_error: rel(&learned.wa2),
        policy_error: probe.map(|pr| policy_error(learned, ideal, pr)),
    }
}

fn policy_error(learned: &WeightSet, ideal: &DVector<f64>, probe: &PolicyProbe) -> f64 {
    let n = probe.plant.state_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(probe.seed);
    let mut worst: f64 = 0.0;
    for _ in 0..probe.count {
        let dir = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        if dir.norm() < 1e-12 {
            continue;
        }
        let r: f64 = probe.radius * rng.random::<f64>().powf(1.0 / n as f64);
        let x = dir.normalize() * r;
        let Ok(d) = probe.plant.affine(&x) else {
            continue;
        };
        let grad = probe.basis.jacobian(&x).tr_mul(ideal);
        let (u1, u2) = policies_from_gradient(&grad, &d.g, probe.cost);
        let u1h = policy_hat(&learned.wa1, &x, probe.basis, &d, probe.cost, Player::Control);
        let u2h = policy_hat(&learned.wa2, &x, probe.basis, &d, probe.cost, Player::Disturbance);
        worst = worst.max((u1h - u1).norm()).max((u2h - u2).norm());
    }
    worst
}

/// Central-difference linearization about the origin: `A = df/dx (0)`,
/// `B = g(0)`.
pub fn linearize(plant: &dyn ControlAffine, h: f64) -> Result<LinearPlant, OracleError> {
    let n = plant.state_dim();
    let origin = plant
        .affine(&DVector::zeros(n))
        .map_err(|e| OracleError::InvalidPlant(e.to_string()))?;
    let mut a = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut xp = DVector::zeros(n);
        let mut xm = DVector::zeros(n);
        xp[j] = h;
        xm[j] = -h;
        let fp = plant.affine(&xp).map_err(|e| OracleError::InvalidPlant(e.to_string()))?;
        let fm = plant.affine(&xm).map_err(|e| OracleError::InvalidPlant(e.to_string()))?;
        a.set_column(j, &((fp.f - fm.f) / (2.0 * h)));
    }
    LinearPlant::new(a, origin.g)
}

/// A linear plant with its game weights.
#[derive(Debug, Clone)]
pub struct LqProblem {
    pub name: String,
    pub plant: LinearPlant,
    pub weights: LqWeights,
}

impl LqProblem {
    pub fn solve(&self) -> Result<GareSolution, OracleError> {
        gare_solve(&self.plant, &self.weights)
    }
}

/// `x' = -x + u1 + u2`, `q = r = 1`, `gamma^2 = 2`. Closed form
/// `P = -2 + sqrt(6)`.
pub fn scalar_benchmark() -> LqProblem {
    LqProblem {
        name: "scalar".into(),
        plant: LinearPlant::new(DMatrix::from_element(1, 1, -1.0), DMatrix::from_element(1, 1, 1.0))
            .expect("valid plant"),
        weights: LqWeights::new(
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            2f64.sqrt(),
        )
        .expect("valid weights"),
    }
}

/// One translational axis as a double integrator, `Q = I`, `R = 1`.
pub fn double_integrator_benchmark(gamma: f64) -> Result<LqProblem, OracleError> {
    Ok(LqProblem {
        name: "double_integrator".into(),
        plant: LinearPlant::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        )?,
        weights: LqWeights::new(DMatrix::identity(2, 2), DMatrix::identity(1, 1), gamma)?,
    })
}

/// The vehicle model linearized about the resting state.
pub fn linearized_auv_benchmark(params: VehicleParams, weights: LqWeights) -> Result<LqProblem, OracleError> {
    Ok(LqProblem {
        name: "linearized_auv".into(),
        plant: linearize(&Auv::new(params), 1e-6)?,
        weights,
    })
}

/// On-disk form of an LQ problem; matrices as arrays of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LqProblemDoc {
    #[serde(default)]
    pub name: Option<String>,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    /// `null` or absent means no disturbance player.
    #[serde(default)]
    pub gamma: Option<f64>,
}

pub fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, OracleError> {
    let nr = rows.len();
    let nc = rows.first().map_or(0, |r| r.len());
    if nr == 0 || nc == 0 || rows.iter().any(|r| r.len() != nc) {
        return Err(OracleError::InvalidPlant(format!("{what}: ragged or empty matrix")));
    }
    Ok(DMatrix::from_fn(nr, nc, |i, j| rows[i][j]))
}

impl LqProblemDoc {
    pub fn build(&self) -> Result<LqProblem, OracleError> {
        Ok(LqProblem {
            name: self.name.clone().unwrap_or_else(|| "custom".into()),
            plant: LinearPlant::new(matrix_from_rows(&self.a, "a")?, matrix_from_rows(&self.b, "b")?)?,
            weights: LqWeights::new(
                matrix_from_rows(&self.q, "q")?,
                matrix_from_rows(&self.r, "r")?,
                self.gamma.unwrap_or(f64::INFINITY),
            )?,
        })
    }
}
