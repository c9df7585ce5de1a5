//! Plot-ready CSV exports. Regimes are written 1-based and every number
//! with 17 significant digits.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use csv::Writer;

use crate::simulator::{PathRun, PnlSummary};
use crate::stopping::{BoundarySet, Solution};
use crate::surface::Surface;

pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn writer(path: &Path) -> csv::Result<Writer<File>> {
    Ok(Writer::from_writer(File::create(path)?))
}

/// `t,s,regime,value`, rows ordered by regime, then time, then level.
pub fn write_surface<W: Write>(out: W, surface: &Surface) -> csv::Result<()> {
    let mut w = Writer::from_writer(out);
    w.write_record(["t", "s", "regime", "value"])?;
    let g = surface.grid;
    for i in 0..surface.n_regimes() {
        let regime = (i + 1).to_string();
        for n in 0..g.time_nodes() {
            let t = num(g.t(n));
            for (m, &v) in surface.slice(i, n).iter().enumerate() {
                w.write_record([t.as_str(), &num(g.s(m)), &regime, &num(v)])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_surface_file(path: &Path, surface: &Surface) -> csv::Result<()> {
    write_surface(File::create(path)?, surface)
}

/// `t,regime,problem,side,level`; absent boundaries are omitted.
pub fn write_boundaries(path: &Path, boundaries: &BoundarySet) -> csv::Result<()> {
    let mut w = writer(path)?;
    w.write_record(["t", "regime", "problem", "side", "level"])?;
    for row in boundaries.rows() {
        w.write_record([
            num(row.t),
            (row.regime + 1).to_string(),
            row.problem.to_string(),
            row.side.as_str().to_string(),
            num(row.level),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `problem,max_residual,iterations,non_contiguous`.
pub fn write_diagnostics(path: &Path, solution: &Solution) -> csv::Result<()> {
    let mut w = writer(path)?;
    w.write_record(["problem", "max_residual", "iterations", "non_contiguous"])?;
    let problems = [
        ("V", &solution.v, &["V"][..]),
        ("J", &solution.j, &["J"][..]),
        ("U", &solution.u, &["U"][..]),
        ("K", &solution.k, &["K"][..]),
        ("P", &solution.p, &["P_A", "P_B"][..]),
    ];
    for (label, vi, curves) in problems {
        let flagged: usize = solution
            .boundaries
            .curves
            .iter()
            .filter(|c| curves.contains(&c.label.as_str()))
            .map(|c| c.non_contiguous.len())
            .sum();
        w.write_record([
            label.to_string(),
            num(vi.stats.max_residual()),
            vi.stats.total_iterations().to_string(),
            flagged.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `path,t,s,regime` for the first `limit` runs.
pub fn write_paths(path: &Path, runs: &[PathRun], limit: usize) -> csv::Result<()> {
    let mut w = writer(path)?;
    w.write_record(["path", "t", "s", "regime"])?;
    for run in runs.iter().take(limit) {
        let p = &run.path;
        for k in 0..p.len() {
            w.write_record([
                run.index.to_string(),
                num(p.times[k]),
                num(p.levels[k]),
                (p.regimes[k] + 1).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `path,t,action,price,cost,regime,pnl_to_date`.
pub fn write_trades(path: &Path, runs: &[PathRun]) -> csv::Result<()> {
    let mut w = writer(path)?;
    w.write_record(["path", "t", "action", "price", "cost", "regime", "pnl_to_date"])?;
    for run in runs {
        for e in &run.log.events {
            w.write_record([
                run.index.to_string(),
                num(e.time),
                e.action.as_str().to_string(),
                num(e.price),
                num(e.cost),
                (e.regime + 1).to_string(),
                num(e.pnl_to_date),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-path seeds and outcomes:
/// `path,regime_seed,price_seed,initial_regime,round_trips,pnl,pnl_discounted`.
pub fn write_summary(path: &Path, runs: &[PathRun]) -> csv::Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "path",
        "regime_seed",
        "price_seed",
        "initial_regime",
        "round_trips",
        "pnl",
        "pnl_discounted",
    ])?;
    for run in runs {
        w.write_record([
            run.index.to_string(),
            run.regime_seed.to_string(),
            run.price_seed.to_string(),
            (run.path.regimes[0] + 1).to_string(),
            run.log.round_trips().to_string(),
            num(run.log.pnl),
            num(run.log.pnl_discounted),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One-row ensemble aggregate.
pub fn write_ensemble(path: &Path, seed: u64, strategy: &str, s: &PnlSummary) -> csv::Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "seed",
        "strategy",
        "n_paths",
        "mean",
        "stdev",
        "min",
        "max",
        "mean_raw",
        "trade_frequency",
    ])?;
    w.write_record([
        seed.to_string(),
        strategy.to_string(),
        s.count.to_string(),
        num(s.mean),
        num(s.stdev),
        num(s.min),
        num(s.max),
        num(s.mean_raw),
        num(s.trade_frequency),
    ])?;
    w.flush()?;
    Ok(())
}
