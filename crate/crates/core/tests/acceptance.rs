//! End-to-end acceptance gate. Each criterion prints one PASS/FAIL line;
//! the target fails if any criterion fails.

mod common;

use std::f64::consts::FRAC_PI_2;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use auv_adp::basis::{Basis, QuadraticBasis, QuadraticQuarticBasis};
use auv_adp::game::{check_gain_conditions, hamiltonian, policies_from_gradient, GameCost};
use auv_adp::learner::{
    build_sample_set, critic_derivative, LearnerGains, SampleDomain, SampleStrategy,
};
use auv_adp::lq::{self, gare_solve, ideal_weights, LqWeights};
use auv_adp::plant::ControlAffine;
use auv_adp::sim::{run, RunOptions, RunOutput, Scenario, ScenarioDoc};
use auv_adp::value::{bellman_error, WeightSet};
use auv_adp::vehicle::{
    assemble_j, assemble_j_inverse, coriolis, earth_fixed_dynamics, jacobian_j_dot, rotation_j1, Auv,
    PoseState, StateVector, VehicleParams, DEFAULT_THETA_MARGIN,
};
use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_pose(rng: &mut ChaCha8Rng, pitch_limit: f64) -> PoseState {
    PoseState {
        x: rng.random_range(-10.0..10.0),
        y: rng.random_range(-10.0..10.0),
        z: rng.random_range(-10.0..10.0),
        phi: rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
        theta: rng.random_range(-pitch_limit..pitch_limit),
        psi: rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
    }
}

fn kinematics() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let margin = DEFAULT_THETA_MARGIN;
    let (mut ortho, mut det, mut inv) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..10_000 {
        let eta = random_pose(&mut rng, FRAC_PI_2 - margin);
        let j1 = rotation_j1(&eta, margin).map_err(|e| e.to_string())?;
        ortho = ortho.max((j1.transpose() * j1 - Matrix3::identity()).norm());
        det = det.max((j1.determinant() - 1.0).abs());
        let j = assemble_j(&eta, margin).map_err(|e| e.to_string())?;
        let ji = assemble_j_inverse(&eta, margin).map_err(|e| e.to_string())?;
        inv = inv.max((j * ji - Matrix6::identity()).norm());
    }
    let elapsed = start.elapsed();
    ensure(ortho <= 1e-12, || format!("|J1'J1 - I| = {ortho:e}"))?;
    ensure(det <= 1e-12, || format!("|det J1 - 1| = {det:e}"))?;
    ensure(inv <= 1e-10, || format!("|J J^-1 - I| = {inv:e}"))?;
    ensure(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "orthonormality {ortho:.1e}, determinant {det:.1e}, inverse {inv:.1e}, {:.2} s",
        elapsed.as_secs_f64()
    ))
}

fn dynamics() -> Outcome {
    let params = VehicleParams::small_auv();
    let auv = Auv::new(params.clone());
    let f0 = auv.affine(&DVector::zeros(12)).map_err(|e| e.to_string())?.f;
    ensure(f0.iter().all(|&v| v == 0.0), || format!("f(0) = {f0}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut min_eig = f64::INFINITY;
    let mut skew = 0.0f64;
    for _ in 0..1000 {
        let eta = random_pose(&mut rng, 1.3);
        let rate = Vector6::from_fn(|_, _| rng.random_range(-2.0..2.0));
        let ef = earth_fixed_dynamics(&StateVector::new(eta, rate), &params, DEFAULT_THETA_MARGIN)
            .map_err(|e| e.to_string())?;
        min_eig = min_eig.min(ef.m_bar.symmetric_eigenvalues().min());
        ensure(ef.m_bar.cholesky().is_some(), || "M_bar not SPD".into())?;
        let nu = Vector6::from_fn(|_, _| rng.random_range(-3.0..3.0));
        skew = skew.max(nu.dot(&(coriolis(&nu, &params) * nu)).abs());
    }
    ensure(min_eig > 0.0, || format!("min eigenvalue of M_bar {min_eig:e}"))?;
    ensure(skew <= 1e-10, || format!("|nu' C nu| = {skew:e}"))?;
    Ok(format!("f(0) = 0 exactly, min eig M_bar {min_eig:.3}, |nu' C nu| {skew:.1e}"))
}

fn basis_fd_error(basis: &dyn Basis, x: &DVector<f64>, h: f64) -> f64 {
    let exact = basis.jacobian(x);
    let mut fd = DMatrix::zeros(exact.nrows(), x.len());
    for j in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        fd.set_column(j, &((basis.eval(&xp) - basis.eval(&xm)) / (2.0 * h)));
    }
    (&exact - fd).norm() / exact.norm().max(1.0)
}

fn gradients() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = 1e-6;
    let quad = QuadraticBasis::new(12);
    let quartic = QuadraticQuarticBasis::new(4);
    let (mut sigma_err, mut quartic_err, mut jdot_err) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..100 {
        let x = DVector::from_fn(12, |_, _| rng.random_range(-2.0..2.0));
        sigma_err = sigma_err.max(basis_fd_error(&quad, &x, h));
        let x4 = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
        quartic_err = quartic_err.max(basis_fd_error(&quartic, &x4, 1e-5));

        let eta = random_pose(&mut rng, 1.3);
        let rate = Vector6::from_fn(|_, _| rng.random_range(-2.0..2.0));
        let jd = jacobian_j_dot(&eta, &rate, DEFAULT_THETA_MARGIN).map_err(|e| e.to_string())?;
        let at = |t: f64| {
            assemble_j(&PoseState::from_vector(&(eta.to_vector() + rate * t)), DEFAULT_THETA_MARGIN)
                .expect("pose inside guard")
        };
        let fd = (at(h) - at(-h)) / (2.0 * h);
        jdot_err = jdot_err.max((jd - fd).norm() / jd.norm().max(1.0));
    }
    ensure(sigma_err <= 1e-6, || format!("quadratic basis jacobian {sigma_err:e}"))?;
    ensure(quartic_err <= 1e-6, || format!("quartic basis jacobian {quartic_err:e}"))?;
    ensure(jdot_err <= 1e-6, || format!("J-dot {jdot_err:e}"))?;
    Ok(format!(
        "basis {sigma_err:.1e}, quartic basis {quartic_err:.1e}, J-dot {jdot_err:.1e} (relative)"
    ))
}

fn riccati_oracle() -> Outcome {
    let scalar = lq::scalar_benchmark().solve().map_err(|e| e.to_string())?;
    let scalar_err = (scalar.p[(0, 0)] - (6f64.sqrt() - 2.0)).abs();
    ensure(scalar_err <= 1e-10, || format!("scalar P error {scalar_err:e}"))?;

    // HJI residual of the quadratic value on the double integrator and the
    // linearized vehicle.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut hji = 0.0f64;
    let di = lq::double_integrator_benchmark(2.0).map_err(|e| e.to_string())?;
    let auv_weights = LqWeights::new(DMatrix::identity(12, 12), DMatrix::identity(6, 6), 5.0)
        .map_err(|e| e.to_string())?;
    let lin = lq::linearized_auv_benchmark(VehicleParams::small_auv(), auv_weights).map_err(|e| e.to_string())?;
    for problem in [&di, &lin] {
        let sol = problem.solve().map_err(|e| e.to_string())?;
        let cost = problem.weights.cost().map_err(|e| e.to_string())?;
        let n = problem.plant.state_dim();
        for _ in 0..1000 {
            let x = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
            let d = problem.plant.affine(&x).map_err(|e| e.to_string())?;
            let grad = &sol.p * &x * 2.0;
            let (u1, u2) = policies_from_gradient(&grad, &d.g, &cost);
            let res = hamiltonian(&x, &grad, &u1, &u2, &d, &cost).abs() / (1.0 + x.norm_squared());
            hji = hji.max(res);
        }
    }
    ensure(hji <= 1e-8, || format!("HJI residual {hji:e}"))?;

    // gamma -> inf against the sign-function solver
    let mut lqr_err = 0.0f64;
    for problem in [&di, &lin] {
        let w = LqWeights::new(problem.weights.q().clone(), problem.weights.r().clone(), f64::INFINITY)
            .map_err(|e| e.to_string())?;
        let newton = gare_solve(&problem.plant, &w).map_err(|e| e.to_string())?;
        let oracle = common::riccati_by_sign_function(
            problem.plant.a(),
            problem.plant.b(),
            problem.weights.q(),
            problem.weights.r(),
            f64::INFINITY,
        );
        lqr_err = lqr_err.max((&newton.p - &oracle).norm() / oracle.norm());
    }
    ensure(lqr_err <= 1e-8, || format!("LQR limit mismatch {lqr_err:e}"))?;
    Ok(format!(
        "scalar {scalar_err:.1e}, HJI {hji:.1e}, LQR limit vs invariant subspace {lqr_err:.1e}"
    ))
}

fn bellman_stationarity() -> Outcome {
    let di = lq::double_integrator_benchmark(2.0).map_err(|e| e.to_string())?;
    let sol = di.solve().map_err(|e| e.to_string())?;
    let cost = di.weights.cost().map_err(|e| e.to_string())?;
    let basis = QuadraticBasis::new(2);
    let weights = WeightSet::uniform(ideal_weights(&sol, &basis).map_err(|e| e.to_string())?, 10.0);

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut live = 0.0f64;
    for _ in 0..1000 {
        let x = DVector::from_fn(2, |_, _| rng.random_range(-3.0..3.0));
        let d = di.plant.affine(&x).map_err(|e| e.to_string())?;
        live = live.max(bellman_error(&x, &weights, &basis, &d, &cost).delta.abs());
    }
    ensure(live <= 1e-8, || format!("|delta| at random states {live:e}"))?;

    let domain = SampleDomain::symmetric(2, 1.0).map_err(|e| e.to_string())?;
    let mut samples = build_sample_set(&domain, 12, SampleStrategy::LatinHypercube, 7, &di.plant, &basis)
        .map_err(|e| e.to_string())?;
    samples.refresh(&weights, &cost);
    let at_samples = samples.evals().iter().map(|e| e.delta.abs()).fold(0.0, f64::max);
    ensure(at_samples <= 1e-8, || format!("|delta| at samples {at_samples:e}"))?;

    let x = DVector::from_vec(vec![0.4, -0.7]);
    let d = di.plant.affine(&x).map_err(|e| e.to_string())?;
    let eval = bellman_error(&x, &weights, &basis, &d, &cost);
    let gains = LearnerGains::new(5.0, 2.0, 2.0).map_err(|e| e.to_string())?;
    let deriv = critic_derivative(&eval, &samples, &gains).norm();
    ensure(deriv <= 1e-7, || format!("critic derivative {deriv:e}"))?;
    Ok(format!("random {live:.1e}, samples {at_samples:.1e}, critic derivative {deriv:.1e}"))
}

fn load_doc(name: &str) -> Result<ScenarioDoc, String> {
    ScenarioDoc::from_path(&common::scenario_path(name)).map_err(|e| e.to_string())
}

fn run_doc(doc: &ScenarioDoc, oracle: bool) -> Result<(Scenario, RunOutput), String> {
    let sc = Scenario::from_doc(doc).map_err(|e| e.to_string())?;
    let out = run(&sc, RunOptions { attach_oracle: oracle }).map_err(|e| e.to_string())?;
    Ok((sc, out))
}

fn online_convergence() -> Outcome {
    let doc = load_doc("lq_double_integrator.json")?;
    ensure(doc.duration <= 120.0, || format!("duration {} s", doc.duration))?;
    ensure(
        DVector::from_column_slice(&doc.initial_state).norm() <= 1.0,
        || "initial state outside the unit ball".into(),
    )?;
    let start = Instant::now();
    let (sc, out) = run_doc(&doc, false)?;
    let elapsed = start.elapsed();
    ensure(sc.sample_strategy == SampleStrategy::LatinHypercube, || "samples not Latin hypercube".into())?;
    let m = sc.basis.len();
    ensure(sc.sample_count == 4 * m, || format!("N = {} for m = {m}", sc.sample_count))?;
    ensure(out.initial_rank.rank == m, || format!("rank {} < {m}", out.initial_rank.rank))?;

    // ideal weights recomputed independently of the engine's oracle hook
    let linear = sc.plant.linear_model().map_err(|e| e.to_string())?;
    let p = common::riccati_by_sign_function(
        linear.a(),
        linear.b(),
        sc.cost.q(),
        sc.cost.r(),
        sc.cost.gamma(),
    );
    let ideal = DVector::from_vec(vec![p[(0, 0)], 2.0 * p[(0, 1)], p[(1, 1)]]);
    let rel = |w: &DVector<f64>| (w - &ideal).norm() / ideal.norm();
    let (ec, ea1, ea2) = (
        rel(&out.final_weights.wc),
        rel(&out.final_weights.wa1),
        rel(&out.final_weights.wa2),
    );
    let final_delta = out.log.rows.last().map_or(f64::INFINITY, |r| r.delta.abs());
    ensure(ec <= 0.05, || format!("critic error {ec:e}"))?;
    ensure(ea1 <= 0.05, || format!("control actor error {ea1:e}"))?;
    ensure(ea2 <= 0.05, || format!("disturbance actor error {ea2:e}"))?;
    ensure(final_delta <= 1e-2, || format!("final |delta| {final_delta:e}"))?;
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "errors {ec:.1e}/{ea1:.1e}/{ea2:.1e}, final |delta| {final_delta:.1e}, rank {m}/{m}, {} s simulated in {:.2} s",
        sc.duration,
        elapsed.as_secs_f64()
    ))
}

fn auv_bounded() -> Outcome {
    let doc = load_doc("auv_sinusoidal.json")?;
    let (sc, first) = run_doc(&doc, false)?;
    let bound = sc.ultimate_bound.ok_or("scenario records no ultimate bound")?;
    let norms: Vec<f64> = first
        .log
        .rows
        .iter()
        .map(|r| r.zeta.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let peak = norms.iter().cloned().fold(0.0, f64::max);
    let tail_start = first.log.rows.iter().position(|r| r.t >= 0.8 * sc.duration).unwrap_or(0);
    let tail = norms[tail_start..].iter().cloned().fold(0.0, f64::max);
    let actor = first
        .log
        .rows
        .iter()
        .map(|r| r.wa1_norm.max(r.wa2_norm))
        .fold(0.0, f64::max);
    ensure(peak.is_finite(), || "state not finite".into())?;
    ensure(tail < bound, || format!("tail sup {tail} >= bound {bound}"))?;
    ensure(actor <= sc.w_bar, || format!("actor norm {actor} > {}", sc.w_bar))?;

    let (_, second) = run_doc(&doc, false)?;
    let same = first.log.rows.len() == second.log.rows.len()
        && first.log.rows.iter().zip(&second.log.rows).all(|(a, b)| {
            a.zeta.iter().zip(&b.zeta).all(|(x, y)| x.to_bits() == y.to_bits())
                && a.delta.to_bits() == b.delta.to_bits()
                && a.wc_norm.to_bits() == b.wc_norm.to_bits()
        })
        && first
            .final_weights
            .wc
            .iter()
            .zip(second.final_weights.wc.iter())
            .all(|(x, y)| x.to_bits() == y.to_bits());
    ensure(same, || "repeated runs differ".into())?;
    Ok(format!(
        "peak |zeta| {peak:.3}, final-20% sup {tail:.3} < {bound}, max actor norm {actor:.1} <= {}, bit-exact rerun",
        sc.w_bar
    ))
}

fn condition_table() -> Outcome {
    let gains = LearnerGains::new(4.0, 1.0, 1.0).map_err(|e| e.to_string())?;
    // (R diagonal, gamma, expected pass of lambda_min(R) >= gamma^2)
    let cases: [(&[f64], f64, bool); 5] = [
        (&[4.0], 2.0, true),
        (&[1.0], 2.0, false),
        (&[9.0, 16.0], 3.0, true),
        (&[1.0, 10.0], 1.5, false),
        (&[0.25], 0.5, true),
    ];
    for (r, gamma, expected) in cases {
        let cost = GameCost::new(
            DMatrix::identity(2, 2),
            DMatrix::from_diagonal(&DVector::from_column_slice(r)),
            gamma,
        )
        .map_err(|e| e.to_string())?;
        let report = check_gain_conditions(&cost, &gains, 1.0, 3.0, 0.0, 1.0);
        let entry = report.entries.iter().find(|e| e.name == "r_gamma").ok_or("no r_gamma entry")?;
        ensure(entry.passed == expected, || format!("R = {r:?}, gamma = {gamma}: got {}", entry.passed))?;
    }

    // eps' = 0: Q condition reduces to lambda_min(Q) > 0 and the critic
    // condition to c_lower > (eta_a1 + eta_a2) / (2 eta_c) = 0.25.
    let cost = GameCost::new(DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 2.0])), DMatrix::identity(1, 1), 1.0)
        .map_err(|e| e.to_string())?;
    let above = check_gain_conditions(&cost, &gains, 0.3, 7.0, 0.0, 1.0);
    let below = check_gain_conditions(&cost, &gains, 0.2, 7.0, 0.0, 1.0);
    let get = |rep: &auv_adp::ConditionReport, name: &str| {
        rep.entries.iter().find(|e| e.name == name).cloned().expect("entry present")
    };
    let q = get(&above, "q_sc");
    ensure(q.lhs == 0.5 && q.rhs == 0.0 && q.passed, || format!("q_sc {q:?}"))?;
    let wc = get(&above, "wc_sc");
    ensure((wc.rhs - 0.25).abs() < 1e-15 && wc.passed, || format!("wc_sc {wc:?}"))?;
    ensure(!get(&below, "wc_sc").passed, || "wc_sc should fail at c_lower = 0.2".into())?;
    // with eps' > 0: rhs = eta_c L eps' eps / 2 = 4 * 7 * 0.1 * 0.5 / 2 = 0.7
    let with_eps = check_gain_conditions(&cost, &gains, 1.0, 7.0, 0.1, 0.5);
    let q = get(&with_eps, "q_sc");
    ensure((q.rhs - 0.7).abs() < 1e-12 && !q.passed, || format!("q_sc with eps' {q:?}"))?;
    // coupling 7 * 0.1 / (2 * 0.5) = 0.7 plus 0.25
    let wc = get(&with_eps, "wc_sc");
    ensure((wc.rhs - 0.95).abs() < 1e-12 && wc.passed, || format!("wc_sc with eps' {wc:?}"))?;
    Ok("5 (R, gamma) pairs match; reduced Q and critic conditions match".into())
}

fn augmented_final(out: &RunOutput) -> DVector<f64> {
    let w = &out.final_weights;
    let parts = [&out.final_state, &w.wc, &w.wa1, &w.wa2];
    DVector::from_iterator(
        parts.iter().map(|v| v.len()).sum(),
        parts.iter().flat_map(|v| v.iter().cloned()),
    )
}

fn integrator_order() -> Outcome {
    let mut doc = load_doc("lq_double_integrator.json")?;
    doc.duration = 1.0;
    doc.rank_every = 0;
    let base_dt = 0.01;
    let mut finals = Vec::new();
    for k in 0..3 {
        doc.dt = base_dt / f64::from(1 << k);
        let (_, out) = run_doc(&doc, false)?;
        finals.push(augmented_final(&out));
    }
    let coarse = (&finals[0] - &finals[1]).norm();
    let fine = (&finals[1] - &finals[2]).norm();
    let ratio = coarse / fine;
    ensure((12.0..=20.0).contains(&ratio), || format!("ratio {ratio} ({coarse:e} / {fine:e})"))?;
    Ok(format!("ratio {ratio:.2} at dt = {base_dt}, {}, {}", base_dt / 2.0, base_dt / 4.0))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("1 kinematics", kinematics),
        ("2 dynamics consistency", dynamics),
        ("3 gradient checks", gradients),
        ("4 game Riccati oracle", riccati_oracle),
        ("5 Bellman stationarity", bellman_stationarity),
        ("6 online convergence without excitation", online_convergence),
        ("7 bounded nonlinear vehicle under disturbance", auv_bounded),
        ("8 gain condition checker", condition_table),
        ("9 integrator order", integrator_order),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match result {
            Ok(detail) => println!("criterion {name}: PASS ({detail})"),
            Err(detail) => {
                failed += 1;
                println!("criterion {name}: FAIL ({detail})");
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
