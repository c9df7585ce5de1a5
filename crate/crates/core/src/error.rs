use thiserror::Error;

use crate::model::Violation;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("generator matrix must have at least one row")]
    EmptyGenerator,
    #[error("generator row {row} has {len} entries, expected {dim}")]
    NonSquareGenerator { row: usize, len: usize, dim: usize },
    #[error("horizon must be non-negative, got {0}")]
    NegativeHorizon(f64),
    #[error("invalid model: {}", join(.0))]
    Invalid(Vec<Violation>),
}

fn join(violations: &[Violation]) -> String {
    violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("need at least 3 space steps, got {0}")]
    TooFewSpaceSteps(usize),
    #[error("need at least 1 time step")]
    NoTimeSteps,
    #[error("upper truncation level must be finite and > 0, got {0}")]
    BadUpperLevel(f64),
    #[error("horizon must be finite and > 0, got {0}")]
    BadHorizon(f64),
}

#[derive(Debug, Error, PartialEq)]
pub enum SolveError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("system is not diagonally dominant at row {row}")]
    NotDominant { row: usize },
    #[error("zero pivot at row {row}")]
    Singular { row: usize },
    #[error(
        "{problem}: PSOR did not converge at time node {time_node}, regime {regime} after {iterations} iterations"
    )]
    NoConvergence {
        problem: String,
        time_node: usize,
        regime: usize,
        iterations: usize,
    },
    #[error("{problem}: linear solve failed at time node {time_node}, regime {regime}: {source}")]
    AtTimeNode {
        problem: String,
        time_node: usize,
        regime: usize,
        #[source]
        source: Box<SolveError>,
    },
    #[error("grids do not match: {0}")]
    GridMismatch(String),
    #[error("{problem}: regime coupling did not settle at time node {time_node}")]
    CouplingStalled { problem: String, time_node: usize },
    #[error("{problem}: obstacle is not finite")]
    NonFiniteObstacle { problem: String },
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum QueryError {
    #[error("regime {regime} out of range (surface has {n_regimes})")]
    Regime { regime: usize, n_regimes: usize },
    #[error("time {t} outside [0, {t_end}]")]
    Time { t: f64, t_end: f64 },
    #[error("level {s} outside [0, {s_max}]")]
    Level { s: f64, s_max: f64 },
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("path left the solver grid at node {node}: level {level} > s_max {s_max}")]
    OutsideGrid { node: usize, level: f64, s_max: f64 },
    #[error("invalid simulation input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Query(#[from] QueryError),
}
