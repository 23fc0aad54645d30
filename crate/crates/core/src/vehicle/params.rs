use nalgebra::{Matrix6, SymmetricEigen, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// On-disk layout of [`VehicleParams`]. Matrices are arrays of rows, SI units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleParamsDoc {
    /// Rigid-body plus added-mass inertia, 6x6.
    pub inertia: Vec<Vec<f64>>,
    /// Linear damping, 6x6.
    pub linear_damping: Vec<Vec<f64>>,
    /// Diagonal quadratic damping coefficients.
    pub quadratic_damping: [f64; 6],
    /// Weight, N.
    pub weight: f64,
    /// Buoyancy, N.
    pub buoyancy: f64,
    pub center_of_gravity: [f64; 3],
    pub center_of_buoyancy: [f64; 3],
    /// Skip the neutral-buoyancy / metacentric checks.
    #[serde(default)]
    pub allow_non_neutral: bool,
}

/// Inertia, damping and restoring data for the 6-DOF model.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleParams {
    inertia: Matrix6<f64>,
    inertia_inv: Matrix6<f64>,
    linear_damping: Matrix6<f64>,
    quadratic_damping: Vector6<f64>,
    weight: f64,
    buoyancy: f64,
    r_g: Vector3<f64>,
    r_b: Vector3<f64>,
    m_lower: f64,
    m_upper: f64,
}

fn matrix6(rows: &[Vec<f64>], what: &'static str) -> Result<Matrix6<f64>, ModelError> {
    if rows.len() != 6 {
        return Err(ModelError::Dimension {
            what,
            expected: 6,
            got: rows.len(),
        });
    }
    let mut m = Matrix6::zeros();
    for (i, row) in rows.iter().enumerate() {
        if row.len() != 6 {
            return Err(ModelError::Dimension {
                what,
                expected: 6,
                got: row.len(),
            });
        }
        for (j, v) in row.iter().enumerate() {
            m[(i, j)] = *v;
        }
    }
    Ok(m)
}

impl VehicleParams {
    /// Validates and builds the parameter set.
    ///
    /// Unless `allow_non_neutral` is set the vehicle must be neutrally
    /// buoyant with the center of gravity directly below the center of
    /// buoyancy (body z points down), which is what makes the origin an
    /// equilibrium of the unforced plant.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        inertia: Matrix6<f64>,
        linear_damping: Matrix6<f64>,
        quadratic_damping: Vector6<f64>,
        weight: f64,
        buoyancy: f64,
        r_g: Vector3<f64>,
        r_b: Vector3<f64>,
        allow_non_neutral: bool,
    ) -> Result<Self, ModelError> {
        let finite = inertia.iter().all(|v| v.is_finite())
            && linear_damping.iter().all(|v| v.is_finite())
            && quadratic_damping.iter().all(|v| v.is_finite())
            && weight.is_finite()
            && buoyancy.is_finite()
            && r_g.iter().chain(r_b.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(ModelError::NonFinite("vehicle parameters"));
        }

        let asym = (inertia - inertia.transpose()).norm();
        if asym > 1e-9 * inertia.norm().max(1.0) {
            return Err(ModelError::InvalidParams(format!(
                "inertia matrix is not symmetric (asymmetry {asym:e})"
            )));
        }
        let inertia = (inertia + inertia.transpose()) * 0.5;
        let eig = SymmetricEigen::new(inertia).eigenvalues;
        let m_lower = eig.min();
        let m_upper = eig.max();
        if m_lower <= 0.0 {
            return Err(ModelError::InvalidParams(format!(
                "inertia matrix is not positive definite (min eigenvalue {m_lower})"
            )));
        }
        let inertia_inv = inertia
            .cholesky()
            .ok_or_else(|| ModelError::InvalidParams("inertia Cholesky failed".into()))?
            .inverse();
        let inertia_inv = (inertia_inv + inertia_inv.transpose()) * 0.5;

        if weight <= 0.0 || buoyancy <= 0.0 {
            return Err(ModelError::InvalidParams(
                "weight and buoyancy must be positive".into(),
            ));
        }

        if !allow_non_neutral {
            if (weight - buoyancy).abs() > 1e-9 * weight {
                return Err(ModelError::InvalidParams(format!(
                    "vehicle is not neutrally buoyant (W = {weight}, B = {buoyancy})"
                )));
            }
            if r_g.x != r_b.x || r_g.y != r_b.y {
                return Err(ModelError::InvalidParams(
                    "center of gravity is not on the vertical through the center of buoyancy"
                        .into(),
                ));
            }
            if r_g.z <= r_b.z {
                return Err(ModelError::InvalidParams(
                    "center of gravity must lie below the center of buoyancy".into(),
                ));
            }
        }

        Ok(Self {
            inertia,
            inertia_inv,
            linear_damping,
            quadratic_damping,
            weight,
            buoyancy,
            r_g,
            r_b,
            m_lower,
            m_upper,
        })
    }

    pub fn from_doc(doc: &VehicleParamsDoc) -> Result<Self, ModelError> {
        Self::new(
            matrix6(&doc.inertia, "inertia")?,
            matrix6(&doc.linear_damping, "linear_damping")?,
            Vector6::from_row_slice(&doc.quadratic_damping),
            doc.weight,
            doc.buoyancy,
            Vector3::from_row_slice(&doc.center_of_gravity),
            Vector3::from_row_slice(&doc.center_of_buoyancy),
            doc.allow_non_neutral,
        )
    }

    pub fn to_doc(&self) -> VehicleParamsDoc {
        let rows = |m: &Matrix6<f64>| {
            (0..6)
                .map(|i| (0..6).map(|j| m[(i, j)]).collect())
                .collect()
        };
        VehicleParamsDoc {
            inertia: rows(&self.inertia),
            linear_damping: rows(&self.linear_damping),
            quadratic_damping: self.quadratic_damping.into(),
            weight: self.weight,
            buoyancy: self.buoyancy,
            center_of_gravity: self.r_g.into(),
            center_of_buoyancy: self.r_b.into(),
            allow_non_neutral: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let doc: VehicleParamsDoc = serde_json::from_str(text)
            .map_err(|e| ModelError::InvalidParams(format!("malformed JSON: {e}")))?;
        Self::from_doc(&doc)
    }

    /// Generic ~30 kg vehicle, origin at the center of gravity.
    ///
    /// These are configuration defaults, mirrored by `data/small_auv.json`.
    pub fn small_auv() -> Self {
        let weight = 294.3;
        Self::new(
            Matrix6::from_diagonal(&Vector6::new(36.0, 46.0, 46.0, 0.7, 4.2, 4.2)),
            Matrix6::from_diagonal(&Vector6::new(8.0, 16.0, 16.0, 1.0, 3.0, 3.0)),
            Vector6::new(12.0, 30.0, 30.0, 0.5, 2.0, 2.0),
            weight,
            weight,
            Vector3::zeros(),
            Vector3::new(0.0, 0.0, -0.05),
            false,
        )
        .expect("built-in parameters are valid")
    }

    pub fn inertia(&self) -> &Matrix6<f64> {
        &self.inertia
    }

    pub fn inertia_inverse(&self) -> &Matrix6<f64> {
        &self.inertia_inv
    }

    pub fn linear_damping(&self) -> &Matrix6<f64> {
        &self.linear_damping
    }

    pub fn quadratic_damping(&self) -> &Vector6<f64> {
        &self.quadratic_damping
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn buoyancy(&self) -> f64 {
        self.buoyancy
    }

    pub fn center_of_gravity(&self) -> &Vector3<f64> {
        &self.r_g
    }

    pub fn center_of_buoyancy(&self) -> &Vector3<f64> {
        &self.r_b
    }

    /// Smallest eigenvalue of the inertia matrix.
    pub fn m_lower(&self) -> f64 {
        self.m_lower
    }

    /// Largest eigenvalue of the inertia matrix.
    pub fn m_upper(&self) -> f64 {
        self.m_upper
    }
}
