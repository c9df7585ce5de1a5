//! Uniform space-time lattice and the Crank–Nicolson systems of the
//! implicit-explicit scheme.
//!
//! For regime `i` and interior node `m`, one backward step from time level
//! `n` to `n - 1` reads
//! ```text
//! -a g[m-1,n-1] + (1-b) g[m,n-1] - c g[m+1,n-1]
//!     = a g[m-1,n] + (1+b) g[m,n] + c g[m+1,n] + dt * sum_{j != i} q_ij g_j[m,n]
//! ```
//! with `(a, b, c) = (alpha, beta, gamma)` from [`cn_coefficients`]. The
//! regime coupling is carried on the right-hand side, so every regime owns
//! an independent tridiagonal system at a fixed time level. With
//! [`Coupling::Iterated`] the coupling profile is the average of both time
//! levels and the per-regime solves are repeated until it settles.
//!
//! Boundary rows: at `s = 0` the diffusion vanishes and the row discretizes
//! `-r g + g_t + phi(0) g_s + q_ii g = -sum_{j != i} q_ij g_j` with a
//! forward (upwind) space difference, trapezoidal in time by default.
//! At `s_max` the row imposes zero curvature, `g[M] - 2 g[M-1] + g[M-2] = 0`.

use crate::error::{GridError, SolveError};
use crate::model::{MarketModel, Measure};

/// Uniform lattice: `s = m * ds` for `0 <= m <= n_space`, `t = n * dt` for `0 <= n <= n_time`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub n_space: usize,
    pub n_time: usize,
    pub s_max: f64,
    pub t_end: f64,
}

impl GridSpec {
    pub fn new(n_space: usize, n_time: usize, s_max: f64, t_end: f64) -> Result<Self, GridError> {
        if n_space < 3 {
            return Err(GridError::TooFewSpaceSteps(n_space));
        }
        if n_time < 1 {
            return Err(GridError::NoTimeSteps);
        }
        if !(s_max.is_finite() && s_max > 0.0) {
            return Err(GridError::BadUpperLevel(s_max));
        }
        if !(t_end.is_finite() && t_end > 0.0) {
            return Err(GridError::BadHorizon(t_end));
        }
        Ok(Self {
            n_space,
            n_time,
            s_max,
            t_end,
        })
    }

    #[inline]
    pub fn ds(&self) -> f64 {
        self.s_max / self.n_space as f64
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.t_end / self.n_time as f64
    }

    #[inline]
    pub fn s(&self, m: usize) -> f64 {
        m as f64 * self.ds()
    }

    #[inline]
    pub fn t(&self, n: usize) -> f64 {
        n as f64 * self.dt()
    }

    /// Number of space nodes, `n_space + 1`.
    #[inline]
    pub fn space_nodes(&self) -> usize {
        self.n_space + 1
    }

    #[inline]
    pub fn time_nodes(&self) -> usize {
        self.n_time + 1
    }

    /// Same lattice spacing in time over a longer (or shorter) horizon:
    /// `round(n_time * horizon / t_end)` steps ending exactly at `horizon`.
    pub fn with_horizon(&self, horizon: f64) -> Result<Self, GridError> {
        let steps = (self.n_time as f64 * horizon / self.t_end).round().max(1.0) as usize;
        Self::new(self.n_space, steps, self.s_max, horizon)
    }
}

/// Crank–Nicolson weights `(alpha, beta, gamma)` at one node.
///
/// `sigma_m` is the diffusion coefficient at the node (`sigma * sqrt(s)`),
/// `phi_m` the drift, `q_ii` the diagonal generator entry.
#[inline]
pub fn cn_coefficients(dt: f64, ds: f64, sigma_m: f64, phi_m: f64, rate: f64, q_ii: f64) -> (f64, f64, f64) {
    let var = sigma_m * sigma_m;
    let alpha = dt / (4.0 * ds) * (var / ds - phi_m);
    let beta = -0.5 * dt * ((rate - q_ii) + var / (ds * ds));
    let gamma = dt / (4.0 * ds) * (var / ds + phi_m);
    (alpha, beta, gamma)
}

/// Coefficients of one regime over all space nodes `0..=M`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeCoefficients {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    /// Drift at `s = 0`.
    pub drift_at_zero: f64,
    /// Diagonal generator entry `q_ii`.
    pub q_diag: f64,
    /// Off-diagonal `(j, q_ij)` coupling rates.
    pub coupling: Vec<(usize, f64)>,
}

/// Per-regime, per-node Crank–Nicolson coefficients on one grid and measure.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet {
    pub grid: GridSpec,
    pub measure: Measure,
    /// Discount rate used in `beta` (zero under the pricing measure).
    pub rate: f64,
    pub regimes: Vec<RegimeCoefficients>,
}

impl CoefficientSet {
    pub fn n_regimes(&self) -> usize {
        self.regimes.len()
    }

    /// Number of interior nodes with a negative off-diagonal weight
    /// (`alpha < 0` or `gamma < 0`), summed over regimes. The scheme is not
    /// monotone at such nodes.
    pub fn negative_weight_count(&self) -> usize {
        let m_max = self.grid.n_space;
        self.regimes
            .iter()
            .map(|c| (1..m_max).filter(|&m| c.alpha[m] < 0.0 || c.gamma[m] < 0.0).count())
            .sum()
    }
}

pub fn build_coefficients(model: &MarketModel, grid: &GridSpec, measure: Measure) -> CoefficientSet {
    let dt = grid.dt();
    let ds = grid.ds();
    let rate = model.discount(measure);
    let gen = model.generator(measure);
    let regimes = model
        .regimes
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let q_ii = gen.rate(i, i);
            let mut alpha = Vec::with_capacity(grid.space_nodes());
            let mut beta = Vec::with_capacity(grid.space_nodes());
            let mut gamma = Vec::with_capacity(grid.space_nodes());
            for m in 0..grid.space_nodes() {
                let s = grid.s(m);
                let (a, b, c) = cn_coefficients(dt, ds, p.diffusion(s), p.drift(s, measure), rate, q_ii);
                alpha.push(a);
                beta.push(b);
                gamma.push(c);
            }
            RegimeCoefficients {
                alpha,
                beta,
                gamma,
                drift_at_zero: p.drift(0.0, measure),
                q_diag: q_ii,
                coupling: gen.off_diagonal(i),
            }
        })
        .collect();
    CoefficientSet {
        grid: *grid,
        measure,
        rate,
        regimes,
    }
}

/// Time weighting of the `s = 0` boundary row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryPolicy {
    /// Weight of the unknown time level in the `s = 0` row: 1 is backward
    /// Euler, 0.5 is trapezoidal (matching the interior rows).
    pub lower_implicitness: f64,
}

impl Default for BoundaryPolicy {
    fn default() -> Self {
        Self {
            lower_implicitness: 0.5,
        }
    }
}

/// Time treatment of the inter-regime coupling `sum_{j != i} q_ij g_j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Coupling {
    /// Coupling evaluated at the known time level only: one independent
    /// solve per regime and step.
    Explicit,
    /// Coupling averaged over both time levels (Crank–Nicolson), resolved by
    /// Jacobi sweeps over regimes whose first sweep is the explicit step.
    /// Identical regimes then reproduce the single-regime solve exactly.
    #[default]
    Iterated,
}

/// Numerical options shared by the pricing and stopping solvers.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SchemeOptions {
    pub boundary: BoundaryPolicy,
    pub coupling: Coupling,
}

/// Cap on Jacobi sweeps over regimes within one time step.
pub const MAX_COUPLING_SWEEPS: usize = 200;

/// Outcome of [`coupled_step`] for one regime.
pub struct StepOutcome {
    pub values: Vec<f64>,
    /// Inner iterations (PSOR sweeps) summed over coupling sweeps; 1 per direct solve.
    pub iterations: usize,
}

/// One backward step `n -> n - 1` for all regimes.
///
/// `solve(system, rhs, guess)` solves one regime's system; `guess` is that
/// regime's latest iterate at level `n - 1` (the known level on the first
/// sweep). Iterated coupling stops once successive sweeps differ by at most
/// `tol` in max-norm.
pub fn coupled_step<F>(
    systems: &[TridiagonalSystem],
    level: &[&[f64]],
    coupling: Coupling,
    tol: f64,
    solve: F,
) -> Result<Vec<StepOutcome>, CouplingFailure>
where
    F: Fn(&TridiagonalSystem, &[f64], &[f64]) -> Result<StepOutcome, SolveError> + Sync,
{
    use rayon::prelude::*;

    let sweep = |coupling_level: &[&[f64]], guess: &[&[f64]]| -> Result<Vec<StepOutcome>, CouplingFailure> {
        systems
            .par_iter()
            .map(|sys| {
                let rhs = sys.rhs(level[sys.regime], coupling_level);
                solve(sys, &rhs, guess[sys.regime]).map_err(|e| CouplingFailure::Solve {
                    regime: sys.regime,
                    source: e,
                })
            })
            .collect()
    };

    let mut current = sweep(level, level)?;
    let coupled = systems.iter().any(|s| !s.coupling.is_empty());
    if coupling == Coupling::Explicit || !coupled {
        return Ok(current);
    }
    for _ in 0..MAX_COUPLING_SWEEPS {
        let averaged: Vec<Vec<f64>> = current
            .iter()
            .zip(level)
            .map(|(c, l)| c.values.iter().zip(l.iter()).map(|(a, b)| 0.5 * (a + b)).collect())
            .collect();
        let avg_refs: Vec<&[f64]> = averaged.iter().map(|v| v.as_slice()).collect();
        let guess: Vec<&[f64]> = current.iter().map(|c| c.values.as_slice()).collect();
        let mut next = sweep(&avg_refs, &guess)?;
        let change = next
            .iter()
            .zip(&current)
            .flat_map(|(a, b)| a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()))
            .fold(0.0_f64, f64::max);
        for (nx, cur) in next.iter_mut().zip(&current) {
            nx.iterations += cur.iterations;
        }
        current = next;
        if change <= tol {
            return Ok(current);
        }
    }
    Err(CouplingFailure::NoConvergence)
}

/// Failure inside [`coupled_step`].
#[derive(Debug)]
pub enum CouplingFailure {
    Solve { regime: usize, source: SolveError },
    NoConvergence,
}

/// Implicit operator `M1` and explicit operator `M2` of one regime on the
/// closed grid `0..=M`.
///
/// Rows `0..M` are tridiagonal. The last row is the zero-curvature condition
/// and additionally couples to `x[M-2]` through [`Self::top_far`].
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalSystem {
    pub regime: usize,
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
    /// Coefficient of `x[n-3]` in the last row of `M1`; zero for a plain tridiagonal matrix.
    pub top_far: f64,
    pub exp_lower: Vec<f64>,
    pub exp_diag: Vec<f64>,
    pub exp_upper: Vec<f64>,
    /// `(j, dt * q_ij)` explicit coupling weights.
    pub coupling: Vec<(usize, f64)>,
}

impl TridiagonalSystem {
    /// A plain tridiagonal `M1` with no explicit part, for direct use of the solvers.
    pub fn from_diagonals(lower: Vec<f64>, diag: Vec<f64>, upper: Vec<f64>) -> Result<Self, SolveError> {
        let n = diag.len();
        for v in [&lower, &upper] {
            if v.len() != n {
                return Err(SolveError::DimensionMismatch {
                    expected: n,
                    got: v.len(),
                });
            }
        }
        Ok(Self {
            regime: 0,
            lower,
            diag,
            upper,
            top_far: 0.0,
            exp_lower: vec![0.0; n],
            exp_diag: vec![0.0; n],
            exp_upper: vec![0.0; n],
            coupling: Vec::new(),
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Whether the last row is the zero-curvature row (solved unrelaxed by PSOR).
    #[inline]
    pub fn has_extrapolated_top(&self) -> bool {
        self.top_far != 0.0
    }

    /// `M1 x` for row `m`.
    #[inline]
    pub fn implicit_row(&self, m: usize, x: &[f64]) -> f64 {
        let n = self.dim();
        let mut y = self.diag[m] * x[m];
        if m > 0 {
            y += self.lower[m] * x[m - 1];
        }
        if m + 1 < n {
            y += self.upper[m] * x[m + 1];
        }
        if m + 1 == n && n >= 3 && self.top_far != 0.0 {
            y += self.top_far * x[m - 2];
        }
        y
    }

    pub fn apply_implicit(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim()).map(|m| self.implicit_row(m, x)).collect()
    }

    /// Right-hand side `M2 g_i^n + dt * sum_{j != i} q_ij c_j`.
    ///
    /// `own` is this regime's slice at the known time level; `coupling_level[j]`
    /// is the profile `c_j` the coupling is evaluated at (the known level for
    /// the explicit scheme).
    pub fn rhs(&self, own: &[f64], coupling_level: &[&[f64]]) -> Vec<f64> {
        let n = self.dim();
        let coupled_rows = if self.has_extrapolated_top() { n - 1 } else { n };
        (0..n)
            .map(|m| {
                let mut r = self.exp_diag[m] * own[m];
                if m > 0 {
                    r += self.exp_lower[m] * own[m - 1];
                }
                if m + 1 < n {
                    r += self.exp_upper[m] * own[m + 1];
                }
                if m < coupled_rows {
                    for &(j, w) in &self.coupling {
                        r += w * coupling_level[j][m];
                    }
                }
                r
            })
            .collect()
    }
}

/// Builds one system per regime from a coefficient set.
pub fn assemble_systems(coeffs: &CoefficientSet, policy: BoundaryPolicy) -> Result<Vec<TridiagonalSystem>, SolveError> {
    let n = coeffs.grid.space_nodes();
    let dt = coeffs.grid.dt();
    let ds = coeffs.grid.ds();
    let w = policy.lower_implicitness;
    coeffs
        .regimes
        .iter()
        .enumerate()
        .map(|(i, c)| {
            for v in [&c.alpha, &c.beta, &c.gamma] {
                if v.len() != n {
                    return Err(SolveError::DimensionMismatch {
                        expected: n,
                        got: v.len(),
                    });
                }
            }
            if let Some(&(j, _)) = c.coupling.iter().find(|&&(j, _)| j >= coeffs.n_regimes()) {
                return Err(SolveError::DimensionMismatch {
                    expected: coeffs.n_regimes(),
                    got: j + 1,
                });
            }
            let mut lower = vec![0.0; n];
            let mut diag = vec![0.0; n];
            let mut upper = vec![0.0; n];
            let mut exp_lower = vec![0.0; n];
            let mut exp_diag = vec![0.0; n];
            let mut exp_upper = vec![0.0; n];

            // s = 0: upwind first-order row; q_ii is split evenly between the
            // levels as in beta so that it balances the coupling profile
            let adv = dt * c.drift_at_zero / ds;
            let decay = dt * coeffs.rate;
            let exit = -0.5 * dt * c.q_diag;
            diag[0] = 1.0 + w * (adv + decay) + exit;
            upper[0] = -w * adv;
            exp_diag[0] = 1.0 - (1.0 - w) * (adv + decay) - exit;
            exp_upper[0] = (1.0 - w) * adv;

            for m in 1..n - 1 {
                lower[m] = -c.alpha[m];
                diag[m] = 1.0 - c.beta[m];
                upper[m] = -c.gamma[m];
                exp_lower[m] = c.alpha[m];
                exp_diag[m] = 1.0 + c.beta[m];
                exp_upper[m] = c.gamma[m];
            }

            // s = s_max: g[M] - 2 g[M-1] + g[M-2] = 0
            lower[n - 1] = -2.0;
            diag[n - 1] = 1.0;

            Ok(TridiagonalSystem {
                regime: i,
                lower,
                diag,
                upper,
                top_far: 1.0,
                exp_lower,
                exp_diag,
                exp_upper,
                coupling: c.coupling.iter().map(|&(j, q)| (j, dt * q)).collect(),
            })
        })
        .collect()
}

/// Direct solve of `M1 x = rhs` by the Thomas algorithm.
///
/// The zero-curvature top row is eliminated into row `n - 2` first. Fails
/// when a reduced row is not (weakly) diagonally dominant or a pivot vanishes.
pub fn solve_tridiagonal(system: &TridiagonalSystem, rhs: &[f64]) -> Result<Vec<f64>, SolveError> {
    let n = system.dim();
    if rhs.len() != n {
        return Err(SolveError::DimensionMismatch {
            expected: n,
            got: rhs.len(),
        });
    }
    if n == 0 {
        return Ok(Vec::new());
    }

    let eliminate = system.top_far != 0.0 && n >= 3;
    let k = if eliminate { n - 1 } else { n };
    let mut lower = system.lower[..k].to_vec();
    let mut diag = system.diag[..k].to_vec();
    let upper = &system.upper[..k];
    let mut r = rhs[..k].to_vec();

    if eliminate {
        let (top_d, top_l, top_f) = (system.diag[n - 1], system.lower[n - 1], system.top_far);
        if top_d == 0.0 {
            return Err(SolveError::Singular { row: n - 1 });
        }
        let u = system.upper[n - 2];
        lower[n - 2] -= u * top_f / top_d;
        diag[n - 2] -= u * top_l / top_d;
        r[n - 2] -= u * rhs[n - 1] / top_d;
    }

    for m in 0..k {
        let off = if m > 0 { lower[m].abs() } else { 0.0 } + if m + 1 < k { upper[m].abs() } else { 0.0 };
        if diag[m].abs() < off * (1.0 - 1e-12) {
            return Err(SolveError::NotDominant { row: m });
        }
    }

    let mut c_prime = vec![0.0; k];
    let mut d_prime = vec![0.0; k];
    let mut pivot = diag[0];
    if pivot == 0.0 {
        return Err(SolveError::Singular { row: 0 });
    }
    c_prime[0] = if k > 1 { upper[0] / pivot } else { 0.0 };
    d_prime[0] = r[0] / pivot;
    for m in 1..k {
        pivot = diag[m] - lower[m] * c_prime[m - 1];
        if pivot == 0.0 || !pivot.is_finite() {
            return Err(SolveError::Singular { row: m });
        }
        c_prime[m] = if m + 1 < k { upper[m] / pivot } else { 0.0 };
        d_prime[m] = (r[m] - lower[m] * d_prime[m - 1]) / pivot;
    }
    let mut x = vec![0.0; n];
    x[k - 1] = d_prime[k - 1];
    for m in (0..k - 1).rev() {
        x[m] = d_prime[m] - c_prime[m] * x[m + 1];
    }
    if eliminate {
        x[n - 1] = (rhs[n - 1] - system.lower[n - 1] * x[n - 2] - system.top_far * x[n - 3]) / system.diag[n - 1];
    }
    Ok(x)
}
