//! Fixed feature maps `sigma: R^n -> R^m` for the value approximation.
//!
//! Every basis here vanishes at the origin and carries no bias feature, so
//! the approximate value is zero at the equilibrium.

use std::fmt::Debug;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::BasisError;

pub trait Basis: Send + Sync + Debug {
    fn name(&self) -> &'static str;
    /// State dimension `n`.
    fn state_dim(&self) -> usize;
    /// Feature count `m`.
    fn len(&self) -> usize;
    fn eval(&self, x: &DVector<f64>) -> DVector<f64>;
    /// `d sigma / dx`, shape `m x n`.
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64>;

    fn as_quadratic(&self) -> Option<&QuadraticBasis> {
        None
    }

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// All monomials `x_i x_j` with `i <= j`, ordered row by row of the upper
/// triangle: `(0,0), (0,1), .., (0,n-1), (1,1), ..`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticBasis {
    n: usize,
    pairs: Vec<(usize, usize)>,
}

impl QuadraticBasis {
    pub fn new(n: usize) -> Self {
        let pairs = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
        Self { n, pairs }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Weights representing `x' P x` exactly. `P` is symmetrized first.
    pub fn weights_for(&self, p: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.pairs.len(),
            self.pairs.iter().map(|&(i, j)| {
                if i == j {
                    p[(i, i)]
                } else {
                    p[(i, j)] + p[(j, i)]
                }
            }),
        )
    }

    /// Symmetric matrix `P` with `w' sigma(x) = x' P x`.
    pub fn matrix_for(&self, w: &DVector<f64>) -> DMatrix<f64> {
        let mut p = DMatrix::zeros(self.n, self.n);
        for (k, &(i, j)) in self.pairs.iter().enumerate() {
            if i == j {
                p[(i, i)] = w[k];
            } else {
                p[(i, j)] = 0.5 * w[k];
                p[(j, i)] = 0.5 * w[k];
            }
        }
        p
    }
}

impl Basis for QuadraticBasis {
    fn name(&self) -> &'static str {
        "quadratic"
    }

    fn state_dim(&self) -> usize {
        self.n
    }

    fn len(&self) -> usize {
        self.pairs.len()
    }

    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.pairs.len(), self.pairs.iter().map(|&(i, j)| x[i] * x[j]))
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.pairs.len(), self.n);
        for (k, &(i, j)) in self.pairs.iter().enumerate() {
            d[(k, i)] += x[j];
            d[(k, j)] += x[i];
        }
        d
    }

    fn as_quadratic(&self) -> Option<&QuadraticBasis> {
        Some(self)
    }
}

/// Quadratic monomials followed by the quartic terms `x_i^2 x_j^2`, `i <= j`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticQuarticBasis {
    quadratic: QuadraticBasis,
}

impl QuadraticQuarticBasis {
    pub fn new(n: usize) -> Self {
        Self {
            quadratic: QuadraticBasis::new(n),
        }
    }
}

impl Basis for QuadraticQuarticBasis {
    fn name(&self) -> &'static str {
        "quadratic_quartic"
    }

    fn state_dim(&self) -> usize {
        self.quadratic.n
    }

    fn len(&self) -> usize {
        2 * self.quadratic.len()
    }

    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        let q = self.quadratic.eval(x);
        let quartic = q.map(|v| v * v);
        let mut out = DVector::zeros(self.len());
        out.rows_mut(0, q.len()).copy_from(&q);
        out.rows_mut(q.len(), q.len()).copy_from(&quartic);
        out
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let q = self.quadratic.eval(x);
        let dq = self.quadratic.jacobian(x);
        let m = q.len();
        let mut d = DMatrix::zeros(2 * m, self.quadratic.n);
        d.rows_mut(0, m).copy_from(&dq);
        // d(s^2) = 2 s ds
        for k in 0..m {
            let row = dq.row(k) * (2.0 * q[k]);
            d.row_mut(m + k).copy_from(&row);
        }
        d
    }
}

/// Basis selection as it appears in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSpec {
    pub name: String,
    pub dim: usize,
}

impl BasisSpec {
    pub fn quadratic(dim: usize) -> Self {
        Self {
            name: "quadratic".into(),
            dim,
        }
    }

    pub fn build(&self) -> Result<Arc<dyn Basis>, BasisError> {
        match self.name.as_str() {
            "quadratic" => Ok(Arc::new(QuadraticBasis::new(self.dim))),
            "quadratic_quartic" => Ok(Arc::new(QuadraticQuarticBasis::new(self.dim))),
            other => Err(BasisError::Unknown(other.to_string())),
        }
    }
}
