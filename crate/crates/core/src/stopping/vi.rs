use crate::discretization::{
    assemble_systems, build_coefficients, coupled_step, Coupling, CouplingFailure, SchemeOptions, StepOutcome,
};
use crate::error::SolveError;
use crate::model::{MarketModel, Measure};
use crate::surface::Surface;

use super::psor::{complementarity_residual, psor_time_step};
use super::SolverConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

/// `sup` (or `inf`) over stopping times of the obstacle `h`, posed on the
/// obstacle's grid, which runs from `0` to the trading deadline.
#[derive(Debug, Clone)]
pub struct ObstacleProblem {
    pub label: String,
    pub obstacle: Surface,
    pub sense: Sense,
}

impl ObstacleProblem {
    pub fn new(label: impl Into<String>, obstacle: Surface, sense: Sense) -> Self {
        Self {
            label: label.into(),
            obstacle,
            sense,
        }
    }
}

/// Per-level diagnostics of a VI solve, indexed by the time node solved for.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ViStats {
    /// PSOR sweeps summed over regimes and coupling sweeps.
    pub iterations: Vec<usize>,
    /// `max_i || min(M1 g - rhs, g - h) ||_inf` at each level; zero at the terminal level.
    pub residual: Vec<f64>,
}

impl ViStats {
    pub fn max_residual(&self) -> f64 {
        self.residual.iter().copied().fold(0.0, f64::max)
    }

    pub fn total_iterations(&self) -> usize {
        self.iterations.iter().sum()
    }
}

#[derive(Debug, Clone)]
pub struct ViSolution {
    pub value: Surface,
    pub stats: ViStats,
}

/// Backward induction from `g(T_hat) = h(T_hat)` with one projected SOR
/// solve per regime and level.
///
/// Minimization is reduced to maximization: the result is exactly
/// `-solve(maximize, -h)`.
pub fn solve_vi(
    problem: &ObstacleProblem,
    model: &MarketModel,
    cfg: &SolverConfig,
    options: SchemeOptions,
) -> Result<ViSolution, SolveError> {
    cfg.validate()?;
    let h = &problem.obstacle;
    if h.n_regimes() != model.n_regimes() {
        return Err(SolveError::DimensionMismatch {
            expected: model.n_regimes(),
            got: h.n_regimes(),
        });
    }
    if !h.is_finite() {
        return Err(SolveError::NonFiniteObstacle {
            problem: problem.label.clone(),
        });
    }
    match problem.sense {
        Sense::Maximize => solve_maximize(&problem.label, h, model, cfg, options),
        Sense::Minimize => {
            let negated = h.map(h.label.clone(), |v| -v);
            let out = solve_maximize(&problem.label, &negated, model, cfg, options)?;
            Ok(ViSolution {
                value: out.value.map(problem.label.clone(), |v| -v),
                stats: out.stats,
            })
        }
    }
}

fn solve_maximize(
    label: &str,
    h: &Surface,
    model: &MarketModel,
    cfg: &SolverConfig,
    options: SchemeOptions,
) -> Result<ViSolution, SolveError> {
    let grid = h.grid;
    let n_regimes = model.n_regimes();
    let coeffs = build_coefficients(model, &grid, Measure::Historical);
    let systems = assemble_systems(&coeffs, options.boundary)?;

    let mut g = Surface::zeros(label, grid, n_regimes);
    for i in 0..n_regimes {
        g.slice_mut(i, grid.n_time).copy_from_slice(h.slice(i, grid.n_time));
    }
    let mut stats = ViStats {
        iterations: vec![0; grid.time_nodes()],
        residual: vec![0.0; grid.time_nodes()],
    };

    for n in (1..=grid.n_time).rev() {
        let level: Vec<&[f64]> = (0..n_regimes).map(|i| g.slice(i, n)).collect();
        let out = coupled_step(&systems, &level, options.coupling, cfg.epsilon, |sys, rhs, guess| {
            let psor = psor_time_step(sys, rhs, h.slice(sys.regime, n - 1), guess, cfg)?;
            if !psor.converged {
                return Err(SolveError::NoConvergence {
                    problem: label.to_string(),
                    time_node: n - 1,
                    regime: sys.regime,
                    iterations: psor.iterations,
                });
            }
            Ok(StepOutcome {
                values: psor.solution,
                iterations: psor.iterations,
            })
        })
        .map_err(|e| match e {
            CouplingFailure::Solve {
                source: source @ SolveError::NoConvergence { .. },
                ..
            } => source,
            CouplingFailure::Solve { regime, source } => SolveError::AtTimeNode {
                problem: label.to_string(),
                time_node: n - 1,
                regime,
                source: Box::new(source),
            },
            CouplingFailure::NoConvergence => SolveError::CouplingStalled {
                problem: label.to_string(),
                time_node: n - 1,
            },
        })?;

        let profile: Vec<Vec<f64>> = match options.coupling {
            Coupling::Explicit => level.iter().map(|l| l.to_vec()).collect(),
            Coupling::Iterated => out
                .iter()
                .zip(&level)
                .map(|(o, l)| o.values.iter().zip(l.iter()).map(|(a, b)| 0.5 * (a + b)).collect())
                .collect(),
        };
        let profile_refs: Vec<&[f64]> = profile.iter().map(|v| v.as_slice()).collect();
        stats.residual[n - 1] = systems
            .iter()
            .zip(&out)
            .map(|(sys, o)| {
                let rhs = sys.rhs(level[sys.regime], &profile_refs);
                complementarity_residual(sys, &rhs, &o.values, h.slice(sys.regime, n - 1))
            })
            .fold(0.0, f64::max);
        stats.iterations[n - 1] = out.iter().map(|o| o.iterations).sum();

        for (i, o) in out.into_iter().enumerate() {
            g.slice_mut(i, n - 1).copy_from_slice(&o.values);
        }
    }
    Ok(ViSolution { value: g, stats })
}
