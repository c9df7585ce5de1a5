//! Futures prices `f_i(t, s) = E^Q[S_T | S_t = s, xi_t = i]` from the
//! coupled pricing PDEs, solved backward from `f_i(T, s) = s`.

use crate::discretization::{
    assemble_systems, build_coefficients, coupled_step, solve_tridiagonal, CouplingFailure, GridSpec, SchemeOptions,
    StepOutcome,
};
use crate::error::{QueryError, SolveError};
use crate::model::{MarketModel, Measure};
use crate::surface::Surface;

pub const FUTURES_LABEL: &str = "futures";

/// Prices the futures curve in every regime on `grid`, which must end at the maturity.
pub fn price_futures_surface(
    model: &MarketModel,
    grid: &GridSpec,
    options: SchemeOptions,
) -> Result<Surface, SolveError> {
    if (grid.t_end - model.maturity).abs() > 1e-12 * model.maturity {
        return Err(SolveError::GridMismatch(format!(
            "pricing grid ends at {} but maturity is {}",
            grid.t_end, model.maturity
        )));
    }
    let coeffs = build_coefficients(model, grid, Measure::Pricing);
    let systems = assemble_systems(&coeffs, options.boundary)?;
    let n_regimes = model.n_regimes();
    let mut surface = Surface::zeros(FUTURES_LABEL, *grid, n_regimes);
    for i in 0..n_regimes {
        for (m, v) in surface.slice_mut(i, grid.n_time).iter_mut().enumerate() {
            *v = grid.s(m);
        }
    }
    // coupling sweeps stop near round-off of the largest price on the grid
    let tol = 1e-14 * (1.0 + grid.s_max);

    for n in (1..=grid.n_time).rev() {
        let next = {
            let level: Vec<&[f64]> = (0..n_regimes).map(|i| surface.slice(i, n)).collect();
            coupled_step(&systems, &level, options.coupling, tol, |sys, rhs, _| {
                Ok(StepOutcome {
                    values: solve_tridiagonal(sys, rhs)?,
                    iterations: 1,
                })
            })
            .map_err(|e| match e {
                CouplingFailure::Solve { regime, source } => SolveError::AtTimeNode {
                    problem: FUTURES_LABEL.into(),
                    time_node: n - 1,
                    regime,
                    source: Box::new(source),
                },
                CouplingFailure::NoConvergence => SolveError::CouplingStalled {
                    problem: FUTURES_LABEL.into(),
                    time_node: n - 1,
                },
            })?
        };
        for (i, out) in next.into_iter().enumerate() {
            surface.slice_mut(i, n - 1).copy_from_slice(&out.values);
        }
    }
    Ok(surface)
}

/// Futures price at `(t, s)` in regime `i`, bilinear between nodes.
pub fn futures_value(surface: &Surface, t: f64, s: f64, i: usize) -> Result<f64, QueryError> {
    surface.value_at(t, s, i)
}

/// Default probe levels `{0.5, 1, 1.5} * theta_q` for regime `i`.
pub fn probe_levels(model: &MarketModel, i: usize) -> [f64; 3] {
    let th = model.regimes[i].theta_q;
    [0.5 * th, th, 1.5 * th]
}
