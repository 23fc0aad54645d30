//! Z-Y-X Euler kinematics between the body-fixed and earth-fixed frames.
//!
//! Every function here refuses attitudes whose pitch is within
//! `theta_margin` of +/-pi/2, where the Euler-rate map blows up.

use nalgebra::{Matrix3, Matrix6, Vector6};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use crate::error::ModelError;

/// Default distance kept from the pitch singularity, radians.
pub const DEFAULT_THETA_MARGIN: f64 = 0.1;

/// Earth-fixed position (m) and Z-Y-X Euler attitude (rad).
///
/// Angles are stored as given; nothing here wraps them.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PoseState {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub phi: f64,
    pub theta: f64,
    pub psi: f64,
}

impl PoseState {
    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self {
            x: v[0],
            y: v[1],
            z: v[2],
            phi: v[3],
            theta: v[4],
            psi: v[5],
        }
    }

    pub fn attitude(phi: f64, theta: f64, psi: f64) -> Self {
        Self {
            phi,
            theta,
            psi,
            ..Self::default()
        }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(self.x, self.y, self.z, self.phi, self.theta, self.psi)
    }
}

/// Body-fixed linear (m/s) and angular (rad/s) velocity.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BodyVelocity {
    pub u: f64,
    pub v: f64,
    pub w: f64,
    pub p: f64,
    pub q: f64,
    pub r: f64,
}

impl BodyVelocity {
    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self {
            u: v[0],
            v: v[1],
            w: v[2],
            p: v[3],
            q: v[4],
            r: v[5],
        }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(self.u, self.v, self.w, self.p, self.q, self.r)
    }
}

pub fn check_pitch(theta: f64, margin: f64) -> Result<(), ModelError> {
    if !theta.is_finite() {
        return Err(ModelError::NonFinite("pitch"));
    }
    if theta.abs() > FRAC_PI_2 - margin {
        return Err(ModelError::PitchSingularity { theta, margin });
    }
    Ok(())
}

/// Linear-velocity rotation `J1` (body to earth), Z-Y-X convention.
pub fn rotation_j1(eta: &PoseState, margin: f64) -> Result<Matrix3<f64>, ModelError> {
    check_pitch(eta.theta, margin)?;
    let (sf, cf) = eta.phi.sin_cos();
    let (st, ct) = eta.theta.sin_cos();
    let (sp, cp) = eta.psi.sin_cos();
    #[rustfmt::skip]
    let j1 = Matrix3::new(
        cp * ct, -sp * cf + cp * st * sf,  sp * sf + cp * st * cf,
        sp * ct,  cp * cf + sp * st * sf, -cp * sf + sp * st * cf,
        -st,      ct * sf,                 ct * cf,
    );
    Ok(j1)
}

/// Maps body angular rates `(p, q, r)` to Euler-angle rates.
pub fn euler_rate_map_j2(eta: &PoseState, margin: f64) -> Result<Matrix3<f64>, ModelError> {
    check_pitch(eta.theta, margin)?;
    let (sf, cf) = eta.phi.sin_cos();
    let (st, ct) = eta.theta.sin_cos();
    let tt = st / ct;
    #[rustfmt::skip]
    let j2 = Matrix3::new(
        1.0, sf * tt,  cf * tt,
        0.0, cf,      -sf,
        0.0, sf / ct,  cf / ct,
    );
    Ok(j2)
}

/// Closed-form inverse of `J2`, which is bounded everywhere.
pub fn euler_rate_map_j2_inverse(eta: &PoseState, margin: f64) -> Result<Matrix3<f64>, ModelError> {
    check_pitch(eta.theta, margin)?;
    let (sf, cf) = eta.phi.sin_cos();
    let (st, ct) = eta.theta.sin_cos();
    #[rustfmt::skip]
    let inv = Matrix3::new(
        1.0,  0.0, -st,
        0.0,  cf,   ct * sf,
        0.0, -sf,   ct * cf,
    );
    Ok(inv)
}

fn block_diag(a: &Matrix3<f64>, b: &Matrix3<f64>) -> Matrix6<f64> {
    let mut out = Matrix6::zeros();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(a);
    out.fixed_view_mut::<3, 3>(3, 3).copy_from(b);
    out
}

/// `J = blockdiag(J1, J2)`.
pub fn assemble_j(eta: &PoseState, margin: f64) -> Result<Matrix6<f64>, ModelError> {
    Ok(block_diag(&rotation_j1(eta, margin)?, &euler_rate_map_j2(eta, margin)?))
}

/// `J^-1 = blockdiag(J1^T, J2^-1)`, assembled from the blocks rather than by
/// a general inverse.
pub fn assemble_j_inverse(eta: &PoseState, margin: f64) -> Result<Matrix6<f64>, ModelError> {
    Ok(block_diag(
        &rotation_j1(eta, margin)?.transpose(),
        &euler_rate_map_j2_inverse(eta, margin)?,
    ))
}

fn rot_x(a: f64) -> (Matrix3<f64>, Matrix3<f64>) {
    let (s, c) = a.sin_cos();
    #[rustfmt::skip]
    let r = Matrix3::new(
        1.0, 0.0, 0.0,
        0.0, c,  -s,
        0.0, s,   c,
    );
    #[rustfmt::skip]
    let dr = Matrix3::new(
        0.0, 0.0, 0.0,
        0.0, -s,  -c,
        0.0, c,   -s,
    );
    (r, dr)
}

fn rot_y(a: f64) -> (Matrix3<f64>, Matrix3<f64>) {
    let (s, c) = a.sin_cos();
    #[rustfmt::skip]
    let r = Matrix3::new(
        c,  0.0, s,
        0.0, 1.0, 0.0,
        -s, 0.0, c,
    );
    #[rustfmt::skip]
    let dr = Matrix3::new(
        -s, 0.0, c,
        0.0, 0.0, 0.0,
        -c, 0.0, -s,
    );
    (r, dr)
}

fn rot_z(a: f64) -> (Matrix3<f64>, Matrix3<f64>) {
    let (s, c) = a.sin_cos();
    #[rustfmt::skip]
    let r = Matrix3::new(
        c,  -s,  0.0,
        s,   c,  0.0,
        0.0, 0.0, 1.0,
    );
    #[rustfmt::skip]
    let dr = Matrix3::new(
        -s, -c,  0.0,
        c,  -s,  0.0,
        0.0, 0.0, 0.0,
    );
    (r, dr)
}

/// Time derivative of `J` along the pose rate `eta_dot`.
///
/// `J1 = Rz(psi) Ry(theta) Rx(phi)`, so its derivative is the product rule
/// over the three elementary rotations. `J2` only depends on roll and pitch.
pub fn jacobian_j_dot(
    eta: &PoseState,
    eta_dot: &Vector6<f64>,
    margin: f64,
) -> Result<Matrix6<f64>, ModelError> {
    check_pitch(eta.theta, margin)?;
    let (phi_dot, theta_dot, psi_dot) = (eta_dot[3], eta_dot[4], eta_dot[5]);

    let (rx, drx) = rot_x(eta.phi);
    let (ry, dry) = rot_y(eta.theta);
    let (rz, drz) = rot_z(eta.psi);
    let j1_dot = drz * ry * rx * psi_dot + rz * dry * rx * theta_dot + rz * ry * drx * phi_dot;

    let (sf, cf) = eta.phi.sin_cos();
    let (st, ct) = eta.theta.sin_cos();
    let tt = st / ct;
    let sec2 = 1.0 / (ct * ct);
    #[rustfmt::skip]
    let d_phi = Matrix3::new(
        0.0, cf * tt,  -sf * tt,
        0.0, -sf,      -cf,
        0.0, cf / ct,  -sf / ct,
    );
    #[rustfmt::skip]
    let d_theta = Matrix3::new(
        0.0, sf * sec2,     cf * sec2,
        0.0, 0.0,           0.0,
        0.0, sf * tt / ct,  cf * tt / ct,
    );
    let j2_dot = d_phi * phi_dot + d_theta * theta_dot;

    Ok(block_diag(&j1_dot, &j2_dot))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const M: f64 = DEFAULT_THETA_MARGIN;

    #[test]
    fn zero_attitude_is_identity() {
        let eta = PoseState::default();
        assert_eq!(rotation_j1(&eta, M).unwrap(), Matrix3::identity());
        assert_eq!(euler_rate_map_j2(&eta, M).unwrap(), Matrix3::identity());
        assert_eq!(assemble_j(&eta, M).unwrap(), Matrix6::identity());
    }

    #[test]
    fn pure_yaw_rotation() {
        let eta = PoseState::attitude(0.0, 0.0, FRAC_PI_2);
        let j1 = rotation_j1(&eta, M).unwrap();
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert_relative_eq!(j1, expected, epsilon = 1e-15);
        let j = assemble_j(&eta, M).unwrap();
        assert_eq!(j.fixed_view::<3, 3>(0, 0).into_owned(), j1);
    }

    #[test]
    fn pure_roll_maps() {
        let eta = PoseState::attitude(FRAC_PI_2, 0.0, 0.0);
        let expected = Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0);
        assert_relative_eq!(rotation_j1(&eta, M).unwrap(), expected, epsilon = 1e-15);
        assert_relative_eq!(euler_rate_map_j2(&eta, M).unwrap(), expected, epsilon = 1e-15);
    }

    #[test]
    fn pitch_guard() {
        let eta = PoseState::attitude(0.0, FRAC_PI_2 - M / 2.0, 0.0);
        assert!(matches!(
            euler_rate_map_j2(&eta, M),
            Err(ModelError::PitchSingularity { .. })
        ));
        assert!(rotation_j1(&eta, M).is_err());
        assert!(jacobian_j_dot(&eta, &Vector6::zeros(), M).is_err());
        // exactly on the boundary is still allowed
        let edge = PoseState::attitude(0.0, -(FRAC_PI_2 - M), 0.0);
        assert!(assemble_j(&edge, M).is_ok());
        assert!(check_pitch(f64::NAN, M).is_err());
    }

    #[test]
    fn j_dot_zero_rate() {
        let eta = PoseState::attitude(0.3, -0.4, 1.2);
        assert_eq!(jacobian_j_dot(&eta, &Vector6::zeros(), M).unwrap(), Matrix6::zeros());
    }

    #[test]
    fn j_dot_pure_yaw_rate_at_zero_attitude() {
        // d/dt Rz(psi) at psi = 0 is psi_dot * [[0,-1,0],[1,0,0],[0,0,0]]; J2 has no yaw dependence.
        let rate = 0.7;
        let eta_dot = Vector6::new(0.0, 0.0, 0.0, 0.0, 0.0, rate);
        let jd = jacobian_j_dot(&PoseState::default(), &eta_dot, M).unwrap();
        let mut expected = Matrix6::zeros();
        expected[(0, 1)] = -rate;
        expected[(1, 0)] = rate;
        assert_relative_eq!(jd, expected, epsilon = 1e-15);
    }

    #[test]
    fn j1_dot_is_j1_times_body_rate_skew() {
        // Independent identity: dJ1/dt = J1 * S(omega), omega = J2^-1 * euler_rates.
        let eta = PoseState::attitude(0.4, 0.9, -2.0);
        let eta_dot = Vector6::new(0.0, 0.0, 0.0, 0.3, -0.2, 0.5);
        let jd = jacobian_j_dot(&eta, &eta_dot, M).unwrap();
        let omega = euler_rate_map_j2_inverse(&eta, M).unwrap() * eta_dot.fixed_rows::<3>(3);
        let expected = rotation_j1(&eta, M).unwrap() * omega.cross_matrix();
        assert_relative_eq!(jd.fixed_view::<3, 3>(0, 0).into_owned(), expected, epsilon = 1e-14);
    }

    fn attitude() -> impl Strategy<Value = PoseState> {
        let lim = FRAC_PI_2 - M;
        (-10.0..10.0, -lim..lim, -10.0..10.0f64)
            .prop_map(|(phi, theta, psi)| PoseState::attitude(phi, theta, psi))
    }

    proptest! {
        #[test]
        fn j1_orthonormal(eta in attitude()) {
            let j1 = rotation_j1(&eta, M).unwrap();
            prop_assert!((j1.transpose() * j1 - Matrix3::identity()).norm() <= 1e-12);
            prop_assert!((j1.determinant() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn j_inverse_contract(eta in attitude()) {
            let j = assemble_j(&eta, M).unwrap();
            let inv = assemble_j_inverse(&eta, M).unwrap();
            prop_assert!((j * inv - Matrix6::identity()).norm() <= 1e-10);
        }
    }
}
