//! Closed-loop simulation: scenario files, the integrator, logs and metrics.

pub mod engine;
pub mod metrics;
pub mod scenario;
pub mod trajectory;

pub use engine::{run, OracleOutcome, RunOptions, RunOutput, SimError, Summary};
pub use metrics::{metrics, Metrics};
pub use scenario::{Scenario, ScenarioDoc, ScenarioError};
pub use trajectory::{LogRow, TrajectoryLog};
