#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use vixtrade::model::{GeneratorMatrix, MarketModel, RegimeParams};

pub const MATURITY: f64 = 66.0 / 252.0;
pub const DEADLINE: f64 = 22.0 / 252.0;

pub fn low_regime() -> RegimeParams {
    RegimeParams {
        mu_p: 8.57,
        theta_p: 17.58,
        mu_q: 4.55,
        theta_q: 18.16,
        sigma: 5.33,
    }
}

pub fn high_regime() -> RegimeParams {
    RegimeParams {
        mu_p: 9.0,
        theta_p: 39.5,
        mu_q: 4.59,
        theta_q: 40.36,
        sigma: 6.42,
    }
}

/// Two-regime model with switching rates 0.1 (1 -> 2) and 0.5 (2 -> 1).
pub fn two_regime(cost: f64) -> MarketModel {
    MarketModel {
        regimes: vec![low_regime(), high_regime()],
        gen_p: GeneratorMatrix::two_state(0.1, 0.5),
        gen_q: GeneratorMatrix::two_state(0.1, 0.5),
        rate: 0.05,
        cost_close: cost,
        cost_open: cost,
        maturity: MATURITY,
        deadline: DEADLINE,
    }
}

/// Two regimes with close long-run means.
pub fn close_means(cost: f64) -> MarketModel {
    let mut m = two_regime(cost);
    m.regimes[0].theta_p = 35.6;
    m.regimes[0].theta_q = 35.96;
    m
}

/// Historical dynamics equal to pricing dynamics, no discounting, no costs.
pub fn degenerate() -> MarketModel {
    let mut m = two_regime(0.0);
    for r in &mut m.regimes {
        r.mu_p = r.mu_q;
        r.theta_p = r.theta_q;
    }
    m.rate = 0.0;
    m
}

pub fn single(p: RegimeParams, cost: f64) -> MarketModel {
    MarketModel {
        regimes: vec![p],
        gen_p: GeneratorMatrix::zeros(1),
        gen_q: GeneratorMatrix::zeros(1),
        rate: 0.05,
        cost_close: cost,
        cost_open: cost,
        maturity: MATURITY,
        deadline: DEADLINE,
    }
}

/// Solves the LCP `x >= h`, `A x >= b`, `(A x - b) . (x - h) = 0` by trying
/// every active set. Returns the feasible candidate with the smallest
/// violation.
pub fn brute_force_lcp(a: &DMatrix<f64>, b: &DVector<f64>, h: &DVector<f64>) -> DVector<f64> {
    let n = b.len();
    assert!(n <= 16);
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1 << n) {
        let active = |m: usize| mask & (1 << m) != 0;
        let mut sys = DMatrix::<f64>::zeros(n, n);
        let mut rhs = DVector::<f64>::zeros(n);
        for m in 0..n {
            if active(m) {
                sys[(m, m)] = 1.0;
                rhs[m] = h[m];
            } else {
                sys.set_row(m, &a.row(m));
                rhs[m] = b[m];
            }
        }
        let Some(x) = sys.lu().solve(&rhs) else { continue };
        let w = a * &x - b;
        let scale = 1.0 + b.amax() + h.amax();
        let violation = (0..n)
            .map(|m| {
                let below = (h[m] - x[m]).max(0.0);
                let slack = if active(m) { (-w[m]).max(0.0) } else { 0.0 };
                below.max(slack)
            })
            .fold(0.0, f64::max)
            / scale;
        if best.as_ref().is_none_or(|(v, _)| violation < *v) {
            best = Some((violation, x));
        }
    }
    let (violation, x) = best.expect("some active set is solvable");
    assert!(violation < 1e-12, "no feasible active set (violation {violation:e})");
    x
}

use vixtrade::discretization::{assemble_systems, build_coefficients, BoundaryPolicy, Coupling};
use vixtrade::model::Measure;
use vixtrade::stopping::Sense;
use vixtrade::surface::Surface;

/// Backward induction of the obstacle problem with every level solved as
/// one joint LCP over all regimes by active-set enumeration.
///
/// Only the assembled matrices are shared with the solver under test; the
/// right-hand side, the regime coupling and the complementarity solve are
/// rebuilt here from the diagonals.
pub fn oracle_vi(model: &MarketModel, h: &Surface, sense: Sense, coupling: Coupling) -> Surface {
    let grid = h.grid;
    let systems = assemble_systems(
        &build_coefficients(model, &grid, Measure::Historical),
        BoundaryPolicy::default(),
    )
    .unwrap();
    let sign = if sense == Sense::Maximize { 1.0 } else { -1.0 };
    let dim = grid.space_nodes();
    let k = model.n_regimes();
    let mut g = Surface::zeros("oracle", grid, k);
    for i in 0..k {
        for (m, v) in g.slice_mut(i, grid.n_time).iter_mut().enumerate() {
            *v = sign * h.get(i, grid.n_time, m);
        }
    }
    let cw = if coupling == Coupling::Iterated { 0.5 } else { 1.0 };
    for n in (1..=grid.n_time).rev() {
        let mut a = DMatrix::<f64>::zeros(k * dim, k * dim);
        let mut b = DVector::<f64>::zeros(k * dim);
        let mut obstacle = DVector::<f64>::zeros(k * dim);
        for (i, sys) in systems.iter().enumerate() {
            let o = i * dim;
            for m in 0..dim {
                a[(o + m, o + m)] = sys.diag[m];
                let mut r = sys.exp_diag[m] * g.get(i, n, m);
                if m > 0 {
                    a[(o + m, o + m - 1)] = sys.lower[m];
                    r += sys.exp_lower[m] * g.get(i, n, m - 1);
                }
                if m + 1 < dim {
                    a[(o + m, o + m + 1)] = sys.upper[m];
                    r += sys.exp_upper[m] * g.get(i, n, m + 1);
                }
                if m + 1 < dim {
                    for &(j, w) in &sys.coupling {
                        r += cw * w * g.get(j, n, m);
                        if coupling == Coupling::Iterated {
                            a[(o + m, j * dim + m)] -= 0.5 * w;
                        }
                    }
                }
                b[o + m] = r;
                obstacle[o + m] = sign * h.get(i, n - 1, m);
            }
            a[(o + dim - 1, o + dim - 3)] = sys.top_far;
        }
        let x = brute_force_lcp(&a, &b, &obstacle);
        for i in 0..k {
            for m in 0..dim {
                g.slice_mut(i, n - 1)[m] = x[i * dim + m];
            }
        }
    }
    g.map("oracle", |v| sign * v)
}
