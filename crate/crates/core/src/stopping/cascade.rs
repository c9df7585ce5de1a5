use crate::discretization::{GridSpec, SchemeOptions};
use crate::error::SolveError;
use crate::futures::price_futures_surface;
use crate::model::MarketModel;
use crate::surface::Surface;

use super::boundary::{entry_boundaries, extract_boundaries, BoundarySet, ExerciseRule, Side};
use super::vi::{solve_vi, ObstacleProblem, Sense, ViSolution};
use super::SolverConfig;

pub const ENTRY_LONG: &str = "P_A";
pub const ENTRY_SHORT: &str = "P_B";

/// Immediate entry rewards: `A = (V - (f + c_open))+` for going long and
/// `B = ((f - c_close) - U)+` for going short.
#[derive(Debug, Clone)]
pub struct EntryRewards {
    pub a: Surface,
    pub b: Surface,
}

fn check_trading_grid(model: &MarketModel, futures: &Surface) -> Result<(), SolveError> {
    if (futures.grid.t_end - model.deadline).abs() > 1e-12 * model.deadline {
        return Err(SolveError::GridMismatch(format!(
            "futures surface ends at {} but the trading deadline is {}",
            futures.grid.t_end, model.deadline
        )));
    }
    Ok(())
}

/// Exit value `V` of a long position and entry value `J` of the long-short strategy.
pub fn solve_long_short(
    model: &MarketModel,
    futures: &Surface,
    cfg: &SolverConfig,
    options: SchemeOptions,
) -> Result<(ViSolution, ViSolution), SolveError> {
    check_trading_grid(model, futures)?;
    let c = model.cost_close;
    let exit = ObstacleProblem::new("V", futures.map("V_obstacle", |f| f - c), Sense::Maximize);
    let v = solve_vi(&exit, model, cfg, options)?;
    let ch = model.cost_open;
    let a = v.value.zip_map(futures, "A", |v, f| (v - (f + ch)).max(0.0));
    let j = solve_vi(&ObstacleProblem::new("J", a, Sense::Maximize), model, cfg, options)?;
    Ok((v, j))
}

/// Exit value `U` of a short position and entry value `K` of the short-long strategy.
pub fn solve_short_long(
    model: &MarketModel,
    futures: &Surface,
    cfg: &SolverConfig,
    options: SchemeOptions,
) -> Result<(ViSolution, ViSolution), SolveError> {
    check_trading_grid(model, futures)?;
    let ch = model.cost_open;
    let exit = ObstacleProblem::new("U", futures.map("U_obstacle", |f| f + ch), Sense::Minimize);
    let u = solve_vi(&exit, model, cfg, options)?;
    let c = model.cost_close;
    let b = futures.zip_map(&u.value, "B", |f, u| ((f - c) - u).max(0.0));
    let k = solve_vi(&ObstacleProblem::new("K", b, Sense::Maximize), model, cfg, options)?;
    Ok((u, k))
}

pub fn entry_rewards(model: &MarketModel, v: &Surface, u: &Surface, futures: &Surface) -> EntryRewards {
    let (c, ch) = (model.cost_close, model.cost_open);
    EntryRewards {
        a: v.zip_map(futures, "A", |v, f| (v - (f + ch)).max(0.0)),
        b: futures.zip_map(u, "B", |f, u| ((f - c) - u).max(0.0)),
    }
}

/// Entry value `P` with the better of both rewards as obstacle.
pub fn solve_entry(
    model: &MarketModel,
    v: &Surface,
    u: &Surface,
    futures: &Surface,
    cfg: &SolverConfig,
    options: SchemeOptions,
) -> Result<(ViSolution, EntryRewards), SolveError> {
    check_trading_grid(model, futures)?;
    let rewards = entry_rewards(model, v, u, futures);
    let h = rewards.a.zip_map(&rewards.b, "P_obstacle", f64::max);
    let p = solve_vi(&ObstacleProblem::new("P", h, Sense::Maximize), model, cfg, options)?;
    Ok((p, rewards))
}

/// `L = P - max(A, B)`.
pub fn timing_premium(p: &Surface, rewards: &EntryRewards) -> Surface {
    let best = rewards.a.zip_map(&rewards.b, "best", f64::max);
    p.zip_map(&best, "L", |p, r| p - r)
}

/// Everything computed for one model and trading grid.
#[derive(Debug, Clone)]
pub struct Solution {
    /// Futures prices on the pricing grid `[0, T]`.
    pub futures_full: Surface,
    /// Futures prices on the trading grid `[0, T_hat]`.
    pub futures: Surface,
    pub v: ViSolution,
    pub j: ViSolution,
    pub u: ViSolution,
    pub k: ViSolution,
    pub p: ViSolution,
    pub rewards: EntryRewards,
    pub premium: Surface,
    pub boundaries: BoundarySet,
}

impl Solution {
    /// Worst complementarity residual over all five problems.
    pub fn max_residual(&self) -> f64 {
        [&self.v, &self.j, &self.u, &self.k, &self.p]
            .iter()
            .map(|s| s.stats.max_residual())
            .fold(0.0, f64::max)
    }

    /// Surfaces in export order `V, J, U, K, P, A, B, L`.
    pub fn surfaces(&self) -> [(&'static str, &Surface); 8] {
        [
            ("V", &self.v.value),
            ("J", &self.j.value),
            ("U", &self.u.value),
            ("K", &self.k.value),
            ("P", &self.p.value),
            ("A", &self.rewards.a),
            ("B", &self.rewards.b),
            ("L", &self.premium),
        ]
    }
}

/// Full pipeline on the trading grid `grid` (ending at the deadline): futures
/// on the same time step up to maturity, the long and short cascades in
/// parallel, then the entry problem, premium and all boundaries.
pub fn solve_all(
    model: &MarketModel,
    grid: &GridSpec,
    cfg: &SolverConfig,
    options: SchemeOptions,
) -> Result<Solution, SolveError> {
    cfg.validate()?;
    let pricing = grid
        .with_horizon(model.maturity)
        .map_err(|e| SolveError::GridMismatch(e.to_string()))?;
    let futures_full = price_futures_surface(model, &pricing, options)?;
    let futures = futures_full
        .resample_time(grid)
        .map_err(|e| SolveError::GridMismatch(e.to_string()))?;

    let (long, short) = rayon::join(
        || solve_long_short(model, &futures, cfg, options),
        || solve_short_long(model, &futures, cfg, options),
    );
    let (v, j) = long?;
    let (u, k) = short?;
    let (p, rewards) = solve_entry(model, &v.value, &u.value, &futures, cfg, options)?;
    let premium = timing_premium(&p.value, &rewards);

    let c = model.cost_close;
    let ch = model.cost_open;
    let mut boundaries = extract_boundaries(
        "V",
        &v.value,
        &futures.map("", |f| f - c),
        Side::Above,
        ExerciseRule::Contact,
    );
    boundaries.extend(extract_boundaries(
        "J",
        &j.value,
        &rewards.a,
        Side::Below,
        ExerciseRule::PositiveReward { price: &futures },
    ));
    boundaries.extend(extract_boundaries(
        "U",
        &u.value,
        &futures.map("", |f| f + ch),
        Side::Below,
        ExerciseRule::Contact,
    ));
    boundaries.extend(extract_boundaries(
        "K",
        &k.value,
        &rewards.b,
        Side::Above,
        ExerciseRule::PositiveReward { price: &futures },
    ));
    boundaries.extend(entry_boundaries(&p.value, &rewards, &futures));

    Ok(Solution {
        futures_full,
        futures,
        v,
        j,
        u,
        k,
        p,
        rewards,
        premium,
        boundaries,
    })
}
