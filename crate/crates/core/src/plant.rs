//! Control-affine plants `x' = f(x) + g(x) (u1 + u2)` as seen by the game
//! and the learner.

use nalgebra::{DMatrix, DVector};

use crate::error::ModelError;

/// Drift `f` and input map `g` evaluated at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineDynamics {
    pub f: DVector<f64>,
    pub g: DMatrix<f64>,
}

impl AffineDynamics {
    /// `f + g u`.
    pub fn rate(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.f + &self.g * u
    }
}

pub trait ControlAffine: Send + Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;

    fn affine(&self, state: &DVector<f64>) -> Result<AffineDynamics, ModelError>;

    /// Express a physical disturbance in the coordinates of the input
    /// channel `u2`. Identity unless the plant says otherwise.
    fn disturbance_input(
        &self,
        _state: &DVector<f64>,
        tau_d: &DVector<f64>,
    ) -> Result<DVector<f64>, ModelError> {
        Ok(tau_d.clone())
    }

    fn check_state(&self, state: &DVector<f64>) -> Result<(), ModelError> {
        if state.len() != self.state_dim() {
            return Err(ModelError::Dimension {
                what: "state",
                expected: self.state_dim(),
                got: state.len(),
            });
        }
        if state.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("state"));
        }
        Ok(())
    }
}
