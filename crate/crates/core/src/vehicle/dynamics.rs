use nalgebra::{DMatrix, DVector, Matrix6, Vector3, Vector6};

use super::kinematics::{assemble_j, assemble_j_inverse, jacobian_j_dot, PoseState, DEFAULT_THETA_MARGIN};
use super::params::VehicleParams;
use crate::error::ModelError;
use crate::plant::{AffineDynamics, ControlAffine};

/// Game state: earth-fixed pose and pose rate.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StateVector {
    pub eta: PoseState,
    pub eta_dot: Vector6<f64>,
}

impl StateVector {
    pub fn new(eta: PoseState, eta_dot: Vector6<f64>) -> Self {
        Self { eta, eta_dot }
    }

    pub fn from_slice(values: &[f64]) -> Result<Self, ModelError> {
        if values.len() != 12 {
            return Err(ModelError::Dimension {
                what: "vehicle state",
                expected: 12,
                got: values.len(),
            });
        }
        Ok(Self {
            eta: PoseState::from_vector(&Vector6::from_row_slice(&values[..6])),
            eta_dot: Vector6::from_row_slice(&values[6..]),
        })
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        let mut v = DVector::zeros(12);
        v.fixed_rows_mut::<6>(0).copy_from(&self.eta.to_vector());
        v.fixed_rows_mut::<6>(6).copy_from(&self.eta_dot);
        v
    }
}

/// Rigid-body plus added-mass Coriolis/centripetal matrix.
///
/// Built from the symmetric inertia so that `C(nu) = -C(nu)^T`.
pub fn coriolis(nu: &Vector6<f64>, params: &VehicleParams) -> Matrix6<f64> {
    let m = params.inertia();
    let m11 = m.fixed_view::<3, 3>(0, 0);
    let m12 = m.fixed_view::<3, 3>(0, 3);
    let m21 = m.fixed_view::<3, 3>(3, 0);
    let m22 = m.fixed_view::<3, 3>(3, 3);
    let nu1: Vector3<f64> = nu.fixed_rows::<3>(0).into_owned();
    let nu2: Vector3<f64> = nu.fixed_rows::<3>(3).into_owned();

    let a = (m11 * nu1 + m12 * nu2).cross_matrix();
    let b = (m21 * nu1 + m22 * nu2).cross_matrix();

    let mut c = Matrix6::zeros();
    c.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-a));
    c.fixed_view_mut::<3, 3>(3, 0).copy_from(&(-a));
    c.fixed_view_mut::<3, 3>(3, 3).copy_from(&(-b));
    c
}

/// `D(nu) = D_lin + diag(d_quad_i |nu_i|)`.
pub fn damping(nu: &Vector6<f64>, params: &VehicleParams) -> Matrix6<f64> {
    let quad = params.quadratic_damping().component_mul(&nu.abs());
    params.linear_damping() + Matrix6::from_diagonal(&quad)
}

/// Gravity/buoyancy force and moment vector in the body frame.
pub fn restoring(eta: &PoseState, params: &VehicleParams) -> Vector6<f64> {
    let w = params.weight();
    let b = params.buoyancy();
    let rg = params.center_of_gravity();
    let rb = params.center_of_buoyancy();
    let (sf, cf) = eta.phi.sin_cos();
    let (st, ct) = eta.theta.sin_cos();

    let xm = rg.x * w - rb.x * b;
    let ym = rg.y * w - rb.y * b;
    let zm = rg.z * w - rb.z * b;
    let net = w - b;

    Vector6::new(
        net * st,
        -net * ct * sf,
        -net * ct * cf,
        -ym * ct * cf + zm * ct * sf,
        zm * st + xm * ct * cf,
        -xm * ct * sf - ym * st,
    )
}

/// Body-frame acceleration from the equations of motion.
pub fn body_accel(
    nu: &Vector6<f64>,
    eta: &PoseState,
    tau_b: &Vector6<f64>,
    tau_d: &Vector6<f64>,
    params: &VehicleParams,
) -> Vector6<f64> {
    let rhs = tau_b + tau_d - coriolis(nu, params) * nu - damping(nu, params) * nu - restoring(eta, params);
    params.inertia_inverse() * rhs
}

/// Inertia, Coriolis, damping and restoring terms expressed in the
/// earth-fixed frame.
#[derive(Debug, Clone, PartialEq)]
pub struct EarthFixedDynamics {
    pub m_bar: Matrix6<f64>,
    pub c_bar: Matrix6<f64>,
    pub d_bar: Matrix6<f64>,
    pub g_bar: Vector6<f64>,
    /// `M_bar^-1 = J M^-1 J^T`, exact from the block structure.
    pub m_bar_inv: Matrix6<f64>,
}

pub fn earth_fixed_dynamics(
    state: &StateVector,
    params: &VehicleParams,
    margin: f64,
) -> Result<EarthFixedDynamics, ModelError> {
    let j_inv = assemble_j_inverse(&state.eta, margin)?;
    let j_inv_t = j_inv.transpose();
    let j_dot = jacobian_j_dot(&state.eta, &state.eta_dot, margin)?;
    let nu = j_inv * state.eta_dot;
    let m = params.inertia();

    let m_bar = j_inv_t * m * j_inv;
    let c_bar = j_inv_t * (coriolis(&nu, params) - m * j_inv * j_dot) * j_inv;
    let d_bar = j_inv_t * damping(&nu, params) * j_inv;
    let g_bar = j_inv_t * restoring(&state.eta, params);

    let j = assemble_j(&state.eta, margin)?;
    let m_bar_inv = j * params.inertia_inverse() * j.transpose();

    Ok(EarthFixedDynamics {
        m_bar: (m_bar + m_bar.transpose()) * 0.5,
        c_bar,
        d_bar,
        g_bar,
        m_bar_inv: (m_bar_inv + m_bar_inv.transpose()) * 0.5,
    })
}

/// Drift and input map of the earth-fixed dynamics.
pub fn control_affine(
    state: &StateVector,
    params: &VehicleParams,
    margin: f64,
) -> Result<AffineDynamics, ModelError> {
    let ef = earth_fixed_dynamics(state, params, margin)?;
    let eta_dot = &state.eta_dot;
    let accel = -(ef.m_bar_inv * (ef.c_bar * eta_dot + ef.d_bar * eta_dot + ef.g_bar));

    let mut f = DVector::zeros(12);
    f.fixed_rows_mut::<6>(0).copy_from(eta_dot);
    f.fixed_rows_mut::<6>(6).copy_from(&accel);

    let mut g = DMatrix::zeros(12, 6);
    g.fixed_view_mut::<6, 6>(6, 0).copy_from(&ef.m_bar_inv);

    Ok(AffineDynamics { f, g })
}

/// The vehicle as a 12-state, 6-input control-affine plant.
#[derive(Debug, Clone, PartialEq)]
pub struct Auv {
    pub params: VehicleParams,
    pub theta_margin: f64,
}

impl Auv {
    pub fn new(params: VehicleParams) -> Self {
        Self {
            params,
            theta_margin: DEFAULT_THETA_MARGIN,
        }
    }

    pub fn with_margin(mut self, theta_margin: f64) -> Self {
        self.theta_margin = theta_margin;
        self
    }
}

impl ControlAffine for Auv {
    fn state_dim(&self) -> usize {
        12
    }

    fn input_dim(&self) -> usize {
        6
    }

    fn affine(&self, state: &DVector<f64>) -> Result<AffineDynamics, ModelError> {
        self.check_state(state)?;
        let s = StateVector::from_slice(state.as_slice())?;
        control_affine(&s, &self.params, self.theta_margin)
    }

    /// Body-frame disturbance `tau_d` mapped to `J^-T tau_d`.
    fn disturbance_input(
        &self,
        state: &DVector<f64>,
        tau_d: &DVector<f64>,
    ) -> Result<DVector<f64>, ModelError> {
        self.check_state(state)?;
        if tau_d.len() != 6 {
            return Err(ModelError::Dimension {
                what: "disturbance",
                expected: 6,
                got: tau_d.len(),
            });
        }
        let s = StateVector::from_slice(state.as_slice())?;
        let j_inv_t = assemble_j_inverse(&s.eta, self.theta_margin)?.transpose();
        let out: Vector6<f64> = j_inv_t * Vector6::from_column_slice(tau_d.as_slice());
        Ok(DVector::from_column_slice(out.as_slice()))
    }
}
