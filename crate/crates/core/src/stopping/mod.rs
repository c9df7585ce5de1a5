//! Optimal stopping on the trading grid: the variational inequalities for
//! the exit values `V` (long) and `U` (short), the entry values `J`, `K`
//! and `P`, their free boundaries and the timing premium.
//!
//! Every problem is an obstacle problem under the historical measure,
//! discretized with the Crank–Nicolson systems of
//! [`crate::discretization`] and solved level by level with projected SOR.

mod boundary;
mod cascade;
mod psor;
mod vi;

use serde::{Deserialize, Serialize};

use crate::error::SolveError;

pub use boundary::{
    entry_boundaries, exercise_tolerance, extract_boundaries, BoundaryCurve, BoundaryRow, BoundarySet, ExerciseRule,
    Side,
};
pub use cascade::{
    entry_rewards, solve_all, solve_entry, solve_long_short, solve_short_long, timing_premium, EntryRewards, Solution,
    ENTRY_LONG, ENTRY_SHORT,
};
pub use psor::{complementarity_residual, psor_time_step, PsorOutcome};
pub use vi::{solve_vi, ObstacleProblem, Sense, ViSolution, ViStats};

/// Projected SOR settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Over-relaxation factor in `(0, 2)`.
    pub omega: f64,
    /// Stop once successive iterates differ by less than this in max-norm.
    pub epsilon: f64,
    /// Sweep cap per regime and time level.
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            omega: 1.2,
            epsilon: 1e-8,
            max_iter: 20_000,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolveError> {
        if !(self.omega > 0.0 && self.omega < 2.0) {
            return Err(SolveError::InvalidConfig(format!(
                "omega must lie in (0, 2), got {}",
                self.omega
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(SolveError::InvalidConfig(format!(
                "epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        if self.max_iter == 0 {
            return Err(SolveError::InvalidConfig("max_iter must be >= 1".into()));
        }
        Ok(())
    }
}
