//! Scenario files: everything a closed-loop run needs, in JSON.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basis::{Basis, BasisSpec};
use crate::error::{BasisError, GameError, LearnerError, ModelError, OracleError};
use crate::game::{check_gain_conditions, estimate_drift_bound, ConditionReport, GameCost};
use crate::learner::{LearnerGains, SampleDomain, SampleStrategy, DEFAULT_PROJECTION_MARGIN};
use crate::lq::{self, gare_solve, ideal_weights, linearize, GareSolution, LinearPlant, LqWeights};
use crate::plant::{AffineDynamics, ControlAffine};
use crate::value::WeightSet;
use crate::vehicle::{Auv, VehicleParams, VehicleParamsDoc, DEFAULT_THETA_MARGIN};

pub const DEFAULT_DT: f64 = 0.005;
pub const DEFAULT_DIVERGENCE_BOUND: f64 = 1e3;
pub const DEFAULT_W_BAR: f64 = 100.0;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {message} (line {line}, column {column})")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// A matrix given as a scalar multiple of the identity, a diagonal, or rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Scalar(f64),
    Diagonal { diag: Vec<f64> },
    Rows(Vec<Vec<f64>>),
}

impl MatrixSpec {
    pub fn build(&self, dim: usize, what: &str) -> Result<DMatrix<f64>, ScenarioError> {
        let m = match self {
            MatrixSpec::Scalar(s) => DMatrix::identity(dim, dim) * *s,
            MatrixSpec::Diagonal { diag } => DMatrix::from_diagonal(&DVector::from_column_slice(diag)),
            MatrixSpec::Rows(rows) => lq::matrix_from_rows(rows, what)?,
        };
        if m.nrows() != dim || m.ncols() != dim {
            return Err(ScenarioError::Invalid(format!(
                "{what} must be {dim}x{dim}, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlantSpec {
    /// The 6-DOF vehicle; built-in parameters unless `vehicle` is given.
    Auv {
        #[serde(default)]
        vehicle: Option<VehicleParamsDoc>,
        #[serde(default)]
        theta_margin: Option<f64>,
    },
    Linear { a: Vec<Vec<f64>>, b: Vec<Vec<f64>> },
    /// `scalar`, `double_integrator` or `linearized_auv`.
    Benchmark { name: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    pub q: MatrixSpec,
    pub r: MatrixSpec,
    pub gamma: f64,
    /// Require `lambda_min(R) >= gamma^2` up front.
    #[serde(default)]
    pub theorem_mode: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSpec {
    /// Defaults to four times the basis size.
    #[serde(default)]
    pub count: Option<usize>,
    #[serde(default = "default_strategy")]
    pub strategy: SampleStrategy,
    #[serde(default)]
    pub lower: Option<Vec<f64>>,
    #[serde(default)]
    pub upper: Option<Vec<f64>>,
    /// Shorthand for the box `[-h, h]^n`.
    #[serde(default)]
    pub half_width: Option<f64>,
    /// Defaults to the scenario seed.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Refresh the sampled Bellman errors every `k` steps. `1` refreshes at
    /// every integrator stage.
    #[serde(default = "one")]
    pub refresh_every: usize,
}

fn default_strategy() -> SampleStrategy {
    SampleStrategy::LatinHypercube
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DisturbanceSpec {
    None,
    Constant { amplitude: Vec<f64> },
    Sinusoidal {
        amplitude: Vec<f64>,
        /// rad/s
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightInitSpec {
    /// Independent uniform draws; the critic and both actors start equal.
    Uniform { low: f64, high: f64 },
    Values { values: Vec<f64> },
    /// Game Riccati weights of the (linearized) plant, times `scale`.
    Oracle {
        #[serde(default = "unit")]
        scale: f64,
    },
}

fn unit() -> f64 {
    1.0
}

fn default_weights() -> WeightInitSpec {
    WeightInitSpec::Uniform { low: -0.1, high: 0.1 }
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

fn default_w_bar() -> f64 {
    DEFAULT_W_BAR
}

fn default_margin() -> f64 {
    DEFAULT_PROJECTION_MARGIN
}

fn default_divergence() -> f64 {
    DEFAULT_DIVERGENCE_BOUND
}

/// Scenario file contents before validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    #[serde(default)]
    pub name: Option<String>,
    pub plant: PlantSpec,
    pub initial_state: Vec<f64>,
    pub duration: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub cost: CostSpec,
    pub gains: LearnerGains,
    /// Defaults to the quadratic basis of the state dimension.
    #[serde(default)]
    pub basis: Option<BasisSpec>,
    pub samples: SampleSpec,
    #[serde(default = "none_disturbance")]
    pub disturbance: DisturbanceSpec,
    #[serde(default = "default_weights")]
    pub weights: WeightInitSpec,
    #[serde(default = "default_w_bar")]
    pub w_bar: f64,
    #[serde(default = "default_margin")]
    pub projection_margin: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_divergence")]
    pub divergence_bound: f64,
    /// Rank snapshots every `k` steps; `0` records only the initial one.
    #[serde(default)]
    pub rank_every: usize,
    /// Bound the state norm must stay under over the last fifth of the run.
    #[serde(default)]
    pub ultimate_bound: Option<f64>,
    #[serde(default)]
    pub conditions: ConditionSpec,
}

/// Inputs to the gain-condition report that cannot be measured from the
/// scenario itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionSpec {
    /// Bound on the gradient of the value reconstruction error. Zero when
    /// the basis represents the value exactly.
    #[serde(default)]
    pub eps_prime_bound: f64,
    /// Free trade-off constant of the check, positive.
    #[serde(default = "unit")]
    pub epsilon_free: f64,
}

impl Default for ConditionSpec {
    fn default() -> Self {
        Self {
            eps_prime_bound: 0.0,
            epsilon_free: 1.0,
        }
    }
}

fn none_disturbance() -> DisturbanceSpec {
    DisturbanceSpec::None
}

impl ScenarioDoc {
    pub fn from_json_str(text: &str, origin: &str) -> Result<Self, ScenarioError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            ScenarioError::Parse {
                path: if path == "." { origin.to_string() } else { format!("{origin}: {path}") },
                line: inner.line(),
                column: inner.column(),
                message: inner.to_string(),
            }
        })
    }

    pub fn from_path(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text, &path.display().to_string())
    }
}

/// The plant models a scenario can drive.
#[derive(Debug, Clone)]
pub enum PlantModel {
    Linear(LinearPlant),
    Auv(Auv),
}

impl PlantModel {
    /// The plant itself if linear, otherwise its linearization at rest.
    pub fn linear_model(&self) -> Result<LinearPlant, OracleError> {
        match self {
            PlantModel::Linear(p) => Ok(p.clone()),
            PlantModel::Auv(a) => linearize(a, 1e-6),
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, PlantModel::Linear(_))
    }
}

impl ControlAffine for PlantModel {
    fn state_dim(&self) -> usize {
        match self {
            PlantModel::Linear(p) => p.state_dim(),
            PlantModel::Auv(a) => a.state_dim(),
        }
    }

    fn input_dim(&self) -> usize {
        match self {
            PlantModel::Linear(p) => p.input_dim(),
            PlantModel::Auv(a) => a.input_dim(),
        }
    }

    fn affine(&self, state: &DVector<f64>) -> Result<AffineDynamics, ModelError> {
        match self {
            PlantModel::Linear(p) => p.affine(state),
            PlantModel::Auv(a) => a.affine(state),
        }
    }

    fn disturbance_input(&self, state: &DVector<f64>, tau_d: &DVector<f64>) -> Result<DVector<f64>, ModelError> {
        match self {
            PlantModel::Linear(p) => p.disturbance_input(state, tau_d),
            PlantModel::Auv(a) => a.disturbance_input(state, tau_d),
        }
    }
}

/// The true disturbance acting on the plant, unknown to the learner.
#[derive(Debug, Clone, PartialEq)]
pub enum DisturbanceModel {
    None { dim: usize },
    Constant { amplitude: DVector<f64> },
    Sinusoidal { amplitude: DVector<f64>, frequency: f64, phase: f64 },
}

impl DisturbanceModel {
    pub fn dim(&self) -> usize {
        match self {
            DisturbanceModel::None { dim } => *dim,
            DisturbanceModel::Constant { amplitude } | DisturbanceModel::Sinusoidal { amplitude, .. } => {
                amplitude.len()
            }
        }
    }

    pub fn at(&self, t: f64) -> DVector<f64> {
        match self {
            DisturbanceModel::None { dim } => DVector::zeros(*dim),
            DisturbanceModel::Constant { amplitude } => amplitude.clone(),
            DisturbanceModel::Sinusoidal {
                amplitude,
                frequency,
                phase,
            } => amplitude * (frequency * t + phase).sin(),
        }
    }
}

/// A validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub plant: Arc<PlantModel>,
    pub initial_state: DVector<f64>,
    pub duration: f64,
    pub dt: f64,
    pub steps: usize,
    pub cost: GameCost,
    pub gains: LearnerGains,
    pub basis: Arc<dyn Basis>,
    pub sample_domain: SampleDomain,
    pub sample_count: usize,
    pub sample_strategy: SampleStrategy,
    pub sample_seed: u64,
    pub refresh_every: usize,
    pub disturbance: DisturbanceModel,
    pub weight_init: WeightInitSpec,
    pub w_bar: f64,
    pub projection_margin: f64,
    pub seed: u64,
    pub divergence_bound: f64,
    pub rank_every: usize,
    pub ultimate_bound: Option<f64>,
    pub conditions: ConditionSpec,
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(msg.into())
}

fn vector(values: &[f64], dim: usize, what: &str) -> Result<DVector<f64>, ScenarioError> {
    if values.len() != dim {
        return Err(invalid(format!("{what} needs {dim} entries, got {}", values.len())));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(invalid(format!("{what} has non-finite entries")));
    }
    Ok(DVector::from_column_slice(values))
}

fn build_plant(spec: &PlantSpec) -> Result<PlantModel, ScenarioError> {
    Ok(match spec {
        PlantSpec::Auv { vehicle, theta_margin } => {
            let params = match vehicle {
                Some(doc) => VehicleParams::from_doc(doc)?,
                None => VehicleParams::small_auv(),
            };
            let margin = theta_margin.unwrap_or(DEFAULT_THETA_MARGIN);
            if !(margin > 0.0 && margin < std::f64::consts::FRAC_PI_2) {
                return Err(invalid(format!("theta_margin must lie in (0, pi/2), got {margin}")));
            }
            PlantModel::Auv(Auv::new(params).with_margin(margin))
        }
        PlantSpec::Linear { a, b } => PlantModel::Linear(LinearPlant::new(
            lq::matrix_from_rows(a, "a")?,
            lq::matrix_from_rows(b, "b")?,
        )?),
        PlantSpec::Benchmark { name } => match name.as_str() {
            "scalar" => PlantModel::Linear(lq::scalar_benchmark().plant),
            "double_integrator" => PlantModel::Linear(lq::double_integrator_benchmark(1.0)?.plant),
            "linearized_auv" => PlantModel::Linear(linearize(&Auv::new(VehicleParams::small_auv()), 1e-6)?),
            other => return Err(invalid(format!("unknown benchmark '{other}'"))),
        },
    })
}

impl Scenario {
    pub fn from_doc(doc: &ScenarioDoc) -> Result<Self, ScenarioError> {
        let plant = build_plant(&doc.plant)?;
        let n = plant.state_dim();
        let k = plant.input_dim();

        if !(doc.dt.is_finite() && doc.dt > 0.0) {
            return Err(invalid(format!("dt must be positive, got {}", doc.dt)));
        }
        if !(doc.duration.is_finite() && doc.duration >= doc.dt) {
            return Err(invalid(format!(
                "duration must be at least dt ({}), got {}",
                doc.dt, doc.duration
            )));
        }
        let ratio = doc.duration / doc.dt;
        let steps = ratio.round();
        if (ratio - steps).abs() > 1e-6 * ratio.max(1.0) {
            return Err(invalid(format!(
                "duration {} is not a whole number of steps of {}",
                doc.duration, doc.dt
            )));
        }
        let steps = steps as usize;

        let initial_state = vector(&doc.initial_state, n, "initial_state")?;
        plant.affine(&initial_state)?;

        let mut cost = GameCost::new(doc.cost.q.build(n, "q")?, doc.cost.r.build(k, "r")?, doc.cost.gamma)?;
        if doc.cost.theorem_mode {
            cost = cost.with_theorem_mode()?;
        }
        doc.gains.validate()?;

        let basis = doc.basis.clone().unwrap_or_else(|| BasisSpec::quadratic(n)).build()?;
        if basis.state_dim() != n {
            return Err(BasisError::Dimension {
                basis: basis.state_dim(),
                state: n,
            }
            .into());
        }

        let s = &doc.samples;
        let sample_domain = match (&s.lower, &s.upper, s.half_width) {
            (Some(lo), Some(hi), None) => SampleDomain::new(vector(lo, n, "samples.lower")?, vector(hi, n, "samples.upper")?)?,
            (None, None, Some(h)) if h.is_finite() && h >= 0.0 => SampleDomain::symmetric(n, h)?,
            _ => {
                return Err(invalid(
                    "samples needs either lower and upper, or a non-negative half_width",
                ))
            }
        };
        let sample_count = s.count.unwrap_or(4 * basis.len());
        if s.refresh_every == 0 {
            return Err(invalid("samples.refresh_every must be at least 1"));
        }

        let disturbance = match &doc.disturbance {
            DisturbanceSpec::None => DisturbanceModel::None { dim: k },
            DisturbanceSpec::Constant { amplitude } => DisturbanceModel::Constant {
                amplitude: vector(amplitude, k, "disturbance.amplitude")?,
            },
            DisturbanceSpec::Sinusoidal {
                amplitude,
                frequency,
                phase,
            } => {
                if !(frequency.is_finite() && phase.is_finite()) {
                    return Err(invalid("disturbance frequency and phase must be finite"));
                }
                DisturbanceModel::Sinusoidal {
                    amplitude: vector(amplitude, k, "disturbance.amplitude")?,
                    frequency: *frequency,
                    phase: *phase,
                }
            }
        };

        match &doc.weights {
            WeightInitSpec::Uniform { low, high } if !(low.is_finite() && high.is_finite() && low <= high) => {
                return Err(invalid(format!("weights: bad uniform range [{low}, {high}]")));
            }
            WeightInitSpec::Values { values } => {
                vector(values, basis.len(), "weights.values")?;
            }
            WeightInitSpec::Oracle { scale } if !scale.is_finite() => {
                return Err(invalid("weights.scale must be finite"));
            }
            _ => {}
        }
        if !(doc.w_bar.is_finite() && doc.w_bar > 0.0) {
            return Err(invalid(format!("w_bar must be positive, got {}", doc.w_bar)));
        }
        if !(doc.projection_margin > 0.0 && doc.projection_margin < 1.0) {
            return Err(invalid("projection_margin must lie in (0, 1)"));
        }
        if !(doc.divergence_bound > 0.0) {
            return Err(invalid("divergence_bound must be positive"));
        }
        let cs = &doc.conditions;
        if !(cs.eps_prime_bound.is_finite() && cs.eps_prime_bound >= 0.0 && cs.epsilon_free > 0.0) {
            return Err(invalid("conditions: eps_prime_bound must be >= 0 and epsilon_free > 0"));
        }
        if let Some(b) = doc.ultimate_bound {
            if !(b.is_finite() && b > 0.0) {
                return Err(invalid("ultimate_bound must be positive"));
            }
        }

        Ok(Self {
            name: doc.name.clone().unwrap_or_else(|| "scenario".into()),
            plant: Arc::new(plant),
            initial_state,
            duration: doc.duration,
            dt: doc.dt,
            steps,
            cost,
            gains: doc.gains,
            basis,
            sample_domain,
            sample_count,
            sample_strategy: s.strategy,
            sample_seed: s.seed.unwrap_or(doc.seed),
            refresh_every: s.refresh_every,
            disturbance,
            weight_init: doc.weights.clone(),
            w_bar: doc.w_bar,
            projection_margin: doc.projection_margin,
            seed: doc.seed,
            divergence_bound: doc.divergence_bound,
            rank_every: doc.rank_every,
            ultimate_bound: doc.ultimate_bound,
            conditions: doc.conditions,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        Self::from_doc(&ScenarioDoc::from_path(path)?)
    }

    /// Game Riccati solution for the plant (or its linearization) under the
    /// scenario cost, and the matching basis weights.
    pub fn oracle(&self) -> Result<(GareSolution, DVector<f64>), OracleError> {
        let linear = self.plant.linear_model()?;
        let sol = gare_solve(&linear, &LqWeights::from(&self.cost))?;
        let w = ideal_weights(&sol, self.basis.as_ref())?;
        Ok((sol, w))
    }

    /// Gain conditions with the drift bound sampled over the sample box and
    /// the given Gram lower eigenvalue.
    pub fn gain_conditions(&self, c_lower: f64) -> ConditionReport {
        let drift = estimate_drift_bound(
            self.plant.as_ref(),
            &self.sample_domain.lower,
            &self.sample_domain.upper,
            2000,
            self.seed,
        );
        check_gain_conditions(
            &self.cost,
            &self.gains,
            c_lower,
            drift,
            self.conditions.eps_prime_bound,
            self.conditions.epsilon_free,
        )
    }

    pub fn initial_weights(&self) -> Result<WeightSet, ScenarioError> {
        let m = self.basis.len();
        let w = match &self.weight_init {
            WeightInitSpec::Uniform { low, high } => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                DVector::from_fn(m, |_, _| if high > low { rng.random_range(*low..*high) } else { *low })
            }
            WeightInitSpec::Values { values } => DVector::from_column_slice(values),
            WeightInitSpec::Oracle { scale } => self.oracle()?.1 * *scale,
        };
        let mut weights = WeightSet::uniform(w, self.w_bar);
        crate::learner::clamp_to_ball(&mut weights.wa1, self.w_bar);
        crate::learner::clamp_to_ball(&mut weights.wa2, self.w_bar);
        Ok(weights)
    }
}
