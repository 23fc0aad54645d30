//! Online approximate optimal station keeping for a 6-DOF underwater vehicle.
//!
//! The controller and an unknown disturbance play a zero-sum differential
//! game. An actor-critic learner approximates the game value with a fixed
//! basis and learns it online, using Bellman errors at sampled states in
//! place of a persistence-of-excitation condition.

pub mod basis;
pub mod error;
pub mod game;
pub mod learner;
pub mod lq;
pub mod plant;
pub mod sim;
pub mod value;
pub mod verify;
pub mod vehicle;

pub use basis::{Basis, BasisSpec, QuadraticBasis, QuadraticQuarticBasis};
pub use error::{BasisError, GameError, LearnerError, ModelError, OracleError};
pub use game::{check_gain_conditions, local_cost, ConditionReport, GameCost};
pub use learner::{LearnerGains, RankReport, SampleSet, SampleStrategy};
pub use plant::{AffineDynamics, ControlAffine};
pub use value::{BellmanEval, Player, WeightSet};
