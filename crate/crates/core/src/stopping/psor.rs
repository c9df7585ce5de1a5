use crate::discretization::TridiagonalSystem;
use crate::error::SolveError;

use super::SolverConfig;

/// Result of one projected SOR solve.
#[derive(Debug, Clone, PartialEq)]
pub struct PsorOutcome {
    pub solution: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Solves the complementarity problem `g >= h`, `M1 g >= rhs`,
/// `(M1 g - rhs) . (g - h) = 0` for one regime and time level.
///
/// Each sweep updates nodes in increasing order, relaxes by `omega` and
/// projects onto the obstacle immediately, so later nodes see the projected
/// values. The zero-curvature top row is solved exactly (no relaxation) and
/// then projected. Iteration stops once successive iterates differ by less
/// than `epsilon` in max-norm; on hitting `max_iter` the last iterate is
/// returned with `converged = false`.
pub fn psor_time_step(
    system: &TridiagonalSystem,
    rhs: &[f64],
    obstacle: &[f64],
    warm_start: &[f64],
    cfg: &SolverConfig,
) -> Result<PsorOutcome, SolveError> {
    let n = system.dim();
    for len in [rhs.len(), obstacle.len(), warm_start.len()] {
        if len != n {
            return Err(SolveError::DimensionMismatch { expected: n, got: len });
        }
    }
    if let Some(row) = system.diag.iter().position(|&d| d == 0.0) {
        return Err(SolveError::Singular { row });
    }

    let omega = cfg.omega;
    let top = system.has_extrapolated_top() && n >= 3;
    let relaxed = if top { n - 1 } else { n };
    let mut g: Vec<f64> = warm_start.iter().zip(obstacle).map(|(&w, &h)| w.max(h)).collect();

    for iter in 1..=cfg.max_iter {
        let mut change = 0.0_f64;
        for m in 0..relaxed {
            let mut off = 0.0;
            if m > 0 {
                off += system.lower[m] * g[m - 1];
            }
            if m + 1 < n {
                off += system.upper[m] * g[m + 1];
            }
            let gs = (rhs[m] - off) / system.diag[m];
            let next = (g[m] + omega * (gs - g[m])).max(obstacle[m]);
            change = change.max((next - g[m]).abs());
            g[m] = next;
        }
        if top {
            let m = n - 1;
            let exact = (rhs[m] - system.lower[m] * g[m - 1] - system.top_far * g[m - 2]) / system.diag[m];
            let next = exact.max(obstacle[m]);
            change = change.max((next - g[m]).abs());
            g[m] = next;
        }
        if change < cfg.epsilon {
            return Ok(PsorOutcome {
                solution: g,
                iterations: iter,
                converged: true,
            });
        }
    }
    Ok(PsorOutcome {
        solution: g,
        iterations: cfg.max_iter,
        converged: false,
    })
}

/// Max-norm of the nodewise complementarity residual `min(M1 g - rhs, g - h)`.
pub fn complementarity_residual(system: &TridiagonalSystem, rhs: &[f64], g: &[f64], obstacle: &[f64]) -> f64 {
    (0..system.dim())
        .map(|m| (system.implicit_row(m, g) - rhs[m]).min(g[m] - obstacle[m]).abs())
        .fold(0.0, f64::max)
}
