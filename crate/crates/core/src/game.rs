//! Two-player zero-sum game: the controller `u1` minimizes and the
//! disturbance `u2` maximizes
//!
//! ```text
//! r(x, u1, u2) = x'Qx + u1'R u1 - gamma^2 u2'u2
//! ```
//!
//! integrated along the trajectory. The Nash (saddle-point) condition is
//! assumed to hold; nothing here tries to verify it. Note that `r` is
//! sign-indefinite in `u2`, exactly as written.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::GameError;
use crate::learner::LearnerGains;
use crate::plant::{AffineDynamics, ControlAffine};

/// Weights of the local cost.
#[derive(Debug, Clone, PartialEq)]
pub struct GameCost {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    r_inv: DMatrix<f64>,
    gamma: f64,
    q_lower: f64,
    q_upper: f64,
    r_lower: f64,
    r_upper: f64,
    theorem_mode: bool,
}

fn sym_eig_bounds(m: &DMatrix<f64>) -> (f64, f64) {
    let e = SymmetricEigen::new(m.clone()).eigenvalues;
    (e.min(), e.max())
}

fn check_symmetric(m: &DMatrix<f64>, what: &str) -> Result<(), GameError> {
    if !m.is_square() {
        return Err(GameError::InvalidCost(format!("{what} is not square")));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(GameError::InvalidCost(format!("{what} has non-finite entries")));
    }
    let asym = (m - m.transpose()).norm();
    if asym > 1e-12 * m.norm().max(1.0) {
        return Err(GameError::InvalidCost(format!("{what} is not symmetric")));
    }
    Ok(())
}

impl GameCost {
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>, gamma: f64) -> Result<Self, GameError> {
        check_symmetric(&q, "Q")?;
        check_symmetric(&r, "R")?;
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(GameError::InvalidCost(format!(
                "gamma must be positive and finite, got {gamma}"
            )));
        }
        let (q_lower, q_upper) = sym_eig_bounds(&q);
        if q_lower <= 0.0 {
            return Err(GameError::InvalidCost(format!(
                "Q is not positive definite (min eigenvalue {q_lower})"
            )));
        }
        let (r_lower, r_upper) = sym_eig_bounds(&r);
        if r_lower <= 0.0 {
            return Err(GameError::InvalidCost(format!(
                "R is not positive definite (min eigenvalue {r_lower})"
            )));
        }
        let r_inv = r
            .clone()
            .cholesky()
            .ok_or_else(|| GameError::InvalidCost("R Cholesky failed".into()))?
            .inverse();
        let r_inv = (&r_inv + r_inv.transpose()) * 0.5;
        Ok(Self {
            q,
            r,
            r_inv,
            gamma,
            q_lower,
            q_upper,
            r_lower,
            r_upper,
            theorem_mode: false,
        })
    }

    /// Identity-weighted cost, handy for benchmarks.
    pub fn identity(n: usize, k: usize, gamma: f64) -> Result<Self, GameError> {
        Self::new(DMatrix::identity(n, n), DMatrix::identity(k, k), gamma)
    }

    /// Require `lambda_min(R) >= gamma^2`, the weight condition of the
    /// boundedness theorem.
    pub fn with_theorem_mode(mut self) -> Result<Self, GameError> {
        if self.r_lower < self.gamma_sq() {
            return Err(GameError::InvalidCost(format!(
                "theorem mode needs lambda_min(R) = {} >= gamma^2 = {}",
                self.r_lower,
                self.gamma_sq()
            )));
        }
        self.theorem_mode = true;
        Ok(self)
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn r_inverse(&self) -> &DMatrix<f64> {
        &self.r_inv
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn gamma_sq(&self) -> f64 {
        self.gamma * self.gamma
    }

    pub fn q_lower(&self) -> f64 {
        self.q_lower
    }

    pub fn q_upper(&self) -> f64 {
        self.q_upper
    }

    pub fn r_lower(&self) -> f64 {
        self.r_lower
    }

    pub fn r_upper(&self) -> f64 {
        self.r_upper
    }

    pub fn theorem_mode(&self) -> bool {
        self.theorem_mode
    }

    pub fn state_dim(&self) -> usize {
        self.q.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.r.nrows()
    }
}

pub fn local_cost(
    zeta: &DVector<f64>,
    u1: &DVector<f64>,
    u2: &DVector<f64>,
    cost: &GameCost,
) -> f64 {
    zeta.dot(&(&cost.q * zeta)) + u1.dot(&(&cost.r * u1)) - cost.gamma_sq() * u2.dot(u2)
}

/// Saddle-point policies for a given value gradient:
/// `u1 = -1/2 R^-1 g' dV`, `u2 = 1/(2 gamma^2) g' dV`.
pub fn policies_from_gradient(
    grad_v: &DVector<f64>,
    g: &DMatrix<f64>,
    cost: &GameCost,
) -> (DVector<f64>, DVector<f64>) {
    let gt_grad = g.tr_mul(grad_v);
    let u1 = &cost.r_inv * &gt_grad * -0.5;
    let u2 = gt_grad * (0.5 / cost.gamma_sq());
    (u1, u2)
}

/// `H = r(x, u1, u2) + dV' (f + g (u1 + u2))`.
pub fn hamiltonian(
    zeta: &DVector<f64>,
    grad_v: &DVector<f64>,
    u1: &DVector<f64>,
    u2: &DVector<f64>,
    dynamics: &AffineDynamics,
    cost: &GameCost,
) -> f64 {
    local_cost(zeta, u1, u2, cost) + grad_v.dot(&dynamics.rate(&(u1 + u2)))
}

/// One inequality of the gain check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionEntry {
    pub name: String,
    pub relation: String,
    pub lhs: f64,
    pub rhs: f64,
    pub passed: bool,
    /// Reported for context; does not enter `all_passed`.
    #[serde(default)]
    pub informational: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub entries: Vec<ConditionEntry>,
    pub all_passed: bool,
    pub inputs: ConditionInputs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionInputs {
    pub q_lower: f64,
    pub c_lower: f64,
    pub drift_bound: f64,
    pub eps_prime_bound: f64,
    pub epsilon_free: f64,
    pub eta_c: f64,
    pub eta_a1: f64,
    pub eta_a2: f64,
    pub r_lower: f64,
    pub gamma_sq: f64,
}

impl ConditionReport {
    pub fn entry(&self, name: &str) -> Option<&ConditionEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

/// Evaluate the sufficient conditions of the boundedness theorem.
///
/// * `q_sc`:  `q_lower > eta_c * L_f * |eps'| * eps / 2`
/// * `wc_sc`: `c_lower > L_f * |eps'| / (2 eps) + (eta_a1 + eta_a2) / (2 eta_c)`
/// * `r_gamma`: `lambda_min(R) >= gamma^2`
///
/// `epsilon_free` is the free parameter `eps > 0` that trades the first two
/// against each other. A failing inequality is reported, never raised.
pub fn check_gain_conditions(
    cost: &GameCost,
    gains: &LearnerGains,
    c_lower: f64,
    drift_bound: f64,
    eps_prime_bound: f64,
    epsilon_free: f64,
) -> ConditionReport {
    let q_rhs = gains.eta_c * drift_bound * eps_prime_bound * epsilon_free / 2.0;
    // eps' = 0 removes the first term even if epsilon_free is zero
    let coupling = if eps_prime_bound == 0.0 {
        0.0
    } else {
        drift_bound * eps_prime_bound / (2.0 * epsilon_free)
    };
    let wc_rhs = coupling + (gains.eta_a1 + gains.eta_a2) / (2.0 * gains.eta_c);

    let entries = vec![
        ConditionEntry {
            name: "q_sc".into(),
            relation: ">".into(),
            lhs: cost.q_lower(),
            rhs: q_rhs,
            passed: cost.q_lower() > q_rhs,
            informational: false,
        },
        ConditionEntry {
            name: "wc_sc".into(),
            relation: ">".into(),
            lhs: c_lower,
            rhs: wc_rhs,
            passed: c_lower > wc_rhs,
            informational: false,
        },
        ConditionEntry {
            name: "r_gamma".into(),
            relation: ">=".into(),
            lhs: cost.r_lower(),
            rhs: cost.gamma_sq(),
            passed: cost.r_lower() >= cost.gamma_sq(),
            informational: false,
        },
        // R^-1 - gamma^-2 I >= 0, i.e. the quadratic GARE term has the
        // usual H-infinity sign.
        ConditionEntry {
            name: "gamma_sq_ge_r_max".into(),
            relation: ">=".into(),
            lhs: cost.gamma_sq(),
            rhs: cost.r_upper(),
            passed: cost.gamma_sq() >= cost.r_upper(),
            informational: true,
        },
    ];
    let all_passed = entries.iter().filter(|e| !e.informational).all(|e| e.passed);
    ConditionReport {
        entries,
        all_passed,
        inputs: ConditionInputs {
            q_lower: cost.q_lower(),
            c_lower,
            drift_bound,
            eps_prime_bound,
            epsilon_free,
            eta_c: gains.eta_c,
            eta_a1: gains.eta_a1,
            eta_a2: gains.eta_a2,
            r_lower: cost.r_lower(),
            gamma_sq: cost.gamma_sq(),
        },
    }
}

/// Sampled estimate of `L_f` in `|f(x)| <= L_f |x|` over a box.
///
/// Points where the plant rejects the state (pitch guard) or where `|x|`
/// is tiny are skipped.
pub fn estimate_drift_bound(
    plant: &dyn ControlAffine,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    count: usize,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = plant.state_dim();
    let mut best: f64 = 0.0;
    for _ in 0..count {
        let x = DVector::from_fn(n, |i, _| {
            if upper[i] > lower[i] {
                rng.random_range(lower[i]..upper[i])
            } else {
                lower[i]
            }
        });
        let norm = x.norm();
        if norm < 1e-9 {
            continue;
        }
        if let Ok(d) = plant.affine(&x) {
            best = best.max(d.f.norm() / norm);
        }
    }
    best
}
