#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::DMatrix;

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

/// Stabilizing Riccati solution from the stable invariant subspace of the
/// Hamiltonian matrix `[[A, -S], [-Q, -A']]`, found with the scaled Newton
/// iteration for the matrix sign function. `S = B (R^-1 - gamma^-2 I) B'`,
/// with `gamma = inf` giving the plain LQR case.
pub fn riccati_by_sign_function(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    gamma: f64,
) -> DMatrix<f64> {
    let n = a.nrows();
    let k = b.ncols();
    let r_inv = r.clone().try_inverse().expect("R invertible");
    let coupling = if gamma.is_finite() {
        r_inv - DMatrix::identity(k, k) / (gamma * gamma)
    } else {
        r_inv
    };
    let s = b * coupling * b.transpose();

    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(-&s));
    h.view_mut((n, 0), (n, n)).copy_from(&(-q));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));

    let mut z = h;
    for _ in 0..100 {
        let inv = z.clone().try_inverse().expect("Hamiltonian has no imaginary-axis eigenvalues");
        let c = z.determinant().abs().powf(-1.0 / (2.0 * n as f64));
        let next = (&z * c + inv / c) * 0.5;
        let step = (&next - &z).norm();
        z = next;
        if step <= 1e-13 * z.norm() {
            break;
        }
    }
    // One unscaled polish step.
    let inv = z.clone().try_inverse().expect("sign iterate invertible");
    z = (&z + inv) * 0.5;

    let id = DMatrix::<f64>::identity(n, n);
    let w11 = z.view((0, 0), (n, n)).into_owned();
    let w12 = z.view((0, n), (n, n)).into_owned();
    let w21 = z.view((n, 0), (n, n)).into_owned();
    let w22 = z.view((n, n), (n, n)).into_owned();
    let mut lhs = DMatrix::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&w12);
    lhs.view_mut((n, 0), (n, n)).copy_from(&(w22 + &id));
    let mut rhs = DMatrix::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n)).copy_from(&(-(w11 + &id)));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-w21));
    let p = lhs.svd(true, true).solve(&rhs, 1e-14).expect("least squares");
    (&p + p.transpose()) * 0.5
}
