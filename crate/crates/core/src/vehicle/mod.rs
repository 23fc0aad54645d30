//! 6-DOF underwater vehicle: kinematics, body-frame dynamics and the
//! earth-fixed control-affine form.

mod dynamics;
mod kinematics;
mod params;

pub use dynamics::{
    body_accel, control_affine, coriolis, damping, earth_fixed_dynamics, restoring, Auv,
    EarthFixedDynamics, StateVector,
};
pub use kinematics::{
    assemble_j, assemble_j_inverse, check_pitch, euler_rate_map_j2, euler_rate_map_j2_inverse,
    jacobian_j_dot, rotation_j1, BodyVelocity, PoseState, DEFAULT_THETA_MARGIN,
};
pub use params::{VehicleParams, VehicleParamsDoc};
