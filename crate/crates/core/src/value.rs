//! Approximate value function, approximate saddle-point policies and the
//! measurable Bellman error.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::Basis;
use crate::game::{local_cost, GameCost};
use crate::plant::AffineDynamics;

/// Critic and actor weights plus the actor projection radius.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSet {
    pub wc: DVector<f64>,
    pub wa1: DVector<f64>,
    pub wa2: DVector<f64>,
    pub w_bar: f64,
}

impl WeightSet {
    /// All three estimates set to the same vector.
    pub fn uniform(w: DVector<f64>, w_bar: f64) -> Self {
        Self {
            wc: w.clone(),
            wa1: w.clone(),
            wa2: w,
            w_bar,
        }
    }

    pub fn zeros(m: usize, w_bar: f64) -> Self {
        Self::uniform(DVector::zeros(m), w_bar)
    }

    pub fn len(&self) -> usize {
        self.wc.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wc.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.wc
            .iter()
            .chain(self.wa1.iter())
            .chain(self.wa2.iter())
            .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Player {
    /// The controller, minimizing the cost.
    Control,
    /// The disturbance, maximizing the cost.
    Disturbance,
}

/// Result of one Bellman-error evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct BellmanEval {
    pub delta: f64,
    pub omega: DVector<f64>,
    pub p: f64,
    pub u1: DVector<f64>,
    pub u2: DVector<f64>,
}

/// The matrices `G1 = g R^-1 g'`, `G2 = gamma^-2 g g'` and their projections
/// `Gs_i = sigma' G_i sigma'^T` onto feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct GMatrices {
    pub g1: DMatrix<f64>,
    pub g2: DMatrix<f64>,
    pub gs1: DMatrix<f64>,
    pub gs2: DMatrix<f64>,
}

pub fn value_estimate(wc: &DVector<f64>, zeta: &DVector<f64>, basis: &dyn Basis) -> f64 {
    wc.dot(&basis.eval(zeta))
}

pub fn policy_hat(
    w: &DVector<f64>,
    zeta: &DVector<f64>,
    basis: &dyn Basis,
    dynamics: &AffineDynamics,
    cost: &GameCost,
    player: Player,
) -> DVector<f64> {
    policy_from_jacobian(w, &basis.jacobian(zeta), &dynamics.g, cost, player)
}

/// Policy for a precomputed feature jacobian `dsigma` (`m x n`).
pub fn policy_from_jacobian(
    w: &DVector<f64>,
    dsigma: &DMatrix<f64>,
    g: &DMatrix<f64>,
    cost: &GameCost,
    player: Player,
) -> DVector<f64> {
    let gt_grad = g.tr_mul(&dsigma.tr_mul(w));
    match player {
        Player::Control => cost.r_inverse() * gt_grad * -0.5,
        Player::Disturbance => gt_grad * (0.5 / cost.gamma_sq()),
    }
}

/// `omega = sigma'(f + g (u1 + u2))` and `p = sqrt(1 + omega' omega)`.
pub fn regressor(
    zeta: &DVector<f64>,
    u1: &DVector<f64>,
    u2: &DVector<f64>,
    basis: &dyn Basis,
    dynamics: &AffineDynamics,
) -> (DVector<f64>, f64) {
    regressor_from_jacobian(&basis.jacobian(zeta), u1, u2, dynamics)
}

pub fn regressor_from_jacobian(
    dsigma: &DMatrix<f64>,
    u1: &DVector<f64>,
    u2: &DVector<f64>,
    dynamics: &AffineDynamics,
) -> (DVector<f64>, f64) {
    let omega = dsigma * dynamics.rate(&(u1 + u2));
    let p = (1.0 + omega.norm_squared()).sqrt();
    (omega, p)
}

/// `delta = r(zeta, u1_hat, u2_hat) + Wc' omega` with both policies taken
/// from the actor weights.
pub fn bellman_error(
    zeta: &DVector<f64>,
    weights: &WeightSet,
    basis: &dyn Basis,
    dynamics: &AffineDynamics,
    cost: &GameCost,
) -> BellmanEval {
    bellman_from_jacobian(zeta, &basis.jacobian(zeta), weights, dynamics, cost)
}

pub fn bellman_from_jacobian(
    zeta: &DVector<f64>,
    dsigma: &DMatrix<f64>,
    weights: &WeightSet,
    dynamics: &AffineDynamics,
    cost: &GameCost,
) -> BellmanEval {
    let u1 = policy_from_jacobian(&weights.wa1, dsigma, &dynamics.g, cost, Player::Control);
    let u2 = policy_from_jacobian(&weights.wa2, dsigma, &dynamics.g, cost, Player::Disturbance);
    let (omega, p) = regressor_from_jacobian(dsigma, &u1, &u2, dynamics);
    let delta = local_cost(zeta, &u1, &u2, cost) + weights.wc.dot(&omega);
    BellmanEval {
        delta,
        omega,
        p,
        u1,
        u2,
    }
}

pub fn g_matrices(
    zeta: &DVector<f64>,
    basis: &dyn Basis,
    dynamics: &AffineDynamics,
    cost: &GameCost,
) -> GMatrices {
    let g = &dynamics.g;
    let g1 = g * cost.r_inverse() * g.transpose();
    let g2 = g * g.transpose() / cost.gamma_sq();
    let ds = basis.jacobian(zeta);
    let gs1 = &ds * &g1 * ds.transpose();
    let gs2 = &ds * &g2 * ds.transpose();
    let out = GMatrices {
        g1: symmetrize(g1),
        g2: symmetrize(g2),
        gs1: symmetrize(gs1),
        gs2: symmetrize(gs2),
    };
    debug_assert!(
        [&out.g1, &out.g2, &out.gs1, &out.gs2].iter().all(|m| {
            let eig = (*m).clone().symmetric_eigenvalues();
            eig.min() >= -1e-9 * eig.amax().max(1.0)
        }),
        "G matrices lost positive semi-definiteness"
    );
    out
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Bellman error rewritten in the weight errors `W~ = W - W_hat` for a basis
/// that represents the value exactly (zero reconstruction error):
///
/// `delta = -W~c' omega + 1/4 W~a1' Gs1 W~a1 - 1/4 W~a2' Gs2 W~a2`.
///
/// Only computable when the ideal weights are known; used as a diagnostic
/// against [`bellman_error`].
pub fn bellman_error_from_weight_errors(
    zeta: &DVector<f64>,
    ideal: &DVector<f64>,
    weights: &WeightSet,
    basis: &dyn Basis,
    dynamics: &AffineDynamics,
    cost: &GameCost,
) -> f64 {
    let eval = bellman_error(zeta, weights, basis, dynamics, cost);
    let gm = g_matrices(zeta, basis, dynamics, cost);
    let ec = ideal - &weights.wc;
    let e1 = ideal - &weights.wa1;
    let e2 = ideal - &weights.wa2;
    -ec.dot(&eval.omega) + 0.25 * e1.dot(&(&gm.gs1 * &e1)) - 0.25 * e2.dot(&(&gm.gs2 * &e2))
}
