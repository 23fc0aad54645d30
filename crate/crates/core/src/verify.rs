//! Built-in self-check: residuals and property checks against embedded
//! benchmarks, reported as measured value versus tolerance.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::basis::{Basis, QuadraticBasis};
use crate::game::{hamiltonian, policies_from_gradient};
use crate::lq::{self, gare_residual, ideal_weights};
use crate::plant::ControlAffine;
use crate::value::{bellman_error, WeightSet};
use crate::vehicle::{
    assemble_j, assemble_j_inverse, coriolis, jacobian_j_dot, rotation_j1, Auv, PoseState, VehicleParams,
    DEFAULT_THETA_MARGIN,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

const SEED: u64 = 0x5eed;

fn random_pose(rng: &mut ChaCha8Rng) -> PoseState {
    let lim = FRAC_PI_2 - DEFAULT_THETA_MARGIN;
    PoseState {
        x: rng.random_range(-5.0..5.0),
        y: rng.random_range(-5.0..5.0),
        z: rng.random_range(-5.0..5.0),
        phi: rng.random_range(-3.0..3.0),
        theta: rng.random_range(-lim..lim),
        psi: rng.random_range(-3.0..3.0),
    }
}

/// Run every check with tolerances multiplied by `tolerance_scale`.
pub fn run_checks(tolerance_scale: f64) -> VerifyReport {
    let mut checks = Vec::new();
    let mut push = |name: &str, measured: f64, tolerance: f64| {
        let tolerance = tolerance * tolerance_scale;
        checks.push(Check {
            name: name.to_string(),
            measured,
            tolerance,
            passed: measured <= tolerance,
        });
    };
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let margin = DEFAULT_THETA_MARGIN;

    // rotation properties
    let (mut ortho, mut det, mut inv) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..1000 {
        let eta = random_pose(&mut rng);
        let j1 = rotation_j1(&eta, margin).expect("pose inside guard");
        ortho = ortho.max((j1.transpose() * j1 - Matrix3::identity()).norm());
        det = det.max((j1.determinant() - 1.0).abs());
        let j = assemble_j(&eta, margin).expect("pose inside guard");
        let ji = assemble_j_inverse(&eta, margin).expect("pose inside guard");
        inv = inv.max((j * ji - Matrix6::identity()).norm());
    }
    push("rotation_orthonormality", ortho, 1e-12);
    push("rotation_determinant", det, 1e-12);
    push("kinematic_inverse", inv, 1e-10);

    // vehicle dynamics
    let params = VehicleParams::small_auv();
    let auv = Auv::new(params.clone());
    let f0 = auv.affine(&DVector::zeros(12)).expect("origin is valid").f;
    push("equilibrium_drift", f0.amax(), 0.0);
    let mut skew = 0.0f64;
    for _ in 0..1000 {
        let nu = Vector6::from_fn(|_, _| rng.random_range(-3.0..3.0));
        skew = skew.max(nu.dot(&(coriolis(&nu, &params) * nu)).abs());
    }
    push("coriolis_energy", skew, 1e-10);

    // derivative checks
    let h = 1e-6;
    let basis = QuadraticBasis::new(12);
    let mut basis_err = 0.0f64;
    let mut jdot_err = 0.0f64;
    for _ in 0..100 {
        let x = DVector::from_fn(12, |_, _| rng.random_range(-2.0..2.0));
        let exact = basis.jacobian(&x);
        let mut fd = DMatrix::zeros(exact.nrows(), 12);
        for j in 0..12 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            fd.set_column(j, &((basis.eval(&xp) - basis.eval(&xm)) / (2.0 * h)));
        }
        basis_err = basis_err.max((&exact - fd).norm() / exact.norm().max(1.0));

        let mut eta = random_pose(&mut rng);
        eta.theta = eta.theta.clamp(-1.3, 1.3);
        let rate = Vector6::from_fn(|_, _| rng.random_range(-2.0..2.0));
        let jd = jacobian_j_dot(&eta, &rate, margin).expect("pose inside guard");
        let shifted = |t: f64| PoseState::from_vector(&(eta.to_vector() + rate * t));
        let fd = (assemble_j(&shifted(h), margin).unwrap() - assemble_j(&shifted(-h), margin).unwrap()) / (2.0 * h);
        jdot_err = jdot_err.max((jd - fd).norm() / jd.norm().max(1.0));
    }
    push("basis_jacobian", basis_err, 1e-6);
    push("kinematic_rate_jacobian", jdot_err, 1e-6);

    // game Riccati benchmarks
    match lq::scalar_benchmark().solve() {
        Ok(sol) => push("gare_scalar", (sol.p[(0, 0)] - (-2.0 + 6f64.sqrt())).abs(), 1e-10),
        Err(_) => push("gare_scalar", f64::INFINITY, 1e-10),
    }
    let di = lq::double_integrator_benchmark(2.0).expect("valid benchmark");
    match di.solve() {
        Ok(sol) => {
            push("gare_double_integrator", gare_residual(&di.plant, &di.weights, &sol.p), 1e-10);
            let cost = di.weights.cost().expect("finite gamma");
            let b2 = QuadraticBasis::new(2);
            let w = WeightSet::uniform(ideal_weights(&sol, &b2).expect("quadratic basis"), 10.0);
            let (mut hji, mut bellman) = (0.0f64, 0.0f64);
            for _ in 0..200 {
                let x = DVector::from_fn(2, |_, _| rng.random_range(-3.0..3.0));
                let d = di.plant.affine(&x).expect("linear plant");
                let grad = &sol.p * &x * 2.0;
                let (u1, u2) = policies_from_gradient(&grad, &d.g, &cost);
                let scale = 1.0 + x.norm_squared();
                hji = hji.max(hamiltonian(&x, &grad, &u1, &u2, &d, &cost).abs() / scale);
                bellman = bellman.max(bellman_error(&x, &w, &b2, &d, &cost).delta.abs() / scale);
            }
            push("hji_residual", hji, 1e-8);
            push("bellman_at_ideal_weights", bellman, 1e-8);
        }
        Err(_) => push("gare_double_integrator", f64::INFINITY, 1e-10),
    }

    VerifyReport { checks }
}
