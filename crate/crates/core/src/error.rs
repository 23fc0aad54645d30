use thiserror::Error;

/// Errors raised by the vehicle model and anything that evaluates it.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("pitch {theta} rad is within {margin} rad of the +/-pi/2 singularity")]
    PitchSingularity { theta: f64, margin: f64 },
    #[error("invalid vehicle parameters: {0}")]
    InvalidParams(String),
    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("invalid game cost: {0}")]
    InvalidCost(String),
    #[error("invalid learner gains: {0}")]
    InvalidGains(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BasisError {
    #[error("unknown basis '{0}'")]
    Unknown(String),
    #[error("basis requires a quadratic-monomial basis, got '{0}'")]
    NotQuadratic(String),
    #[error("basis dimension {basis} does not match state dimension {state}")]
    Dimension { basis: usize, state: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnerError {
    #[error("sample count {count} is below the basis size {m}")]
    TooFewSamples { count: usize, m: usize },
    #[error("invalid sample domain: {0}")]
    InvalidDomain(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("game Riccati iteration did not converge (gamma = {gamma}); residual history: {history:?}")]
    NonConvergence { gamma: f64, history: Vec<f64> },
    #[error("invalid linear plant: {0}")]
    InvalidPlant(String),
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Game(#[from] GameError),
}
