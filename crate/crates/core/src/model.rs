//! Regime-switching CIR market model.
//!
//! Under the historical measure the index follows
//! ```text
//! dS = mu_p(xi) (theta_p(xi) - S) dt + sigma(xi) sqrt(S) dB
//! ```
//! and under the pricing measure the same form holds with `(mu_q, theta_q)`.
//! `xi` is a continuous-time Markov chain with generator `gen_p` (historical)
//! or `gen_q` (pricing).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Which probability measure a set of coefficients refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Measure {
    /// Investor's measure: `(mu_p, theta_p)`, `gen_p`, discount rate `r`.
    Historical,
    /// Risk-neutral measure: `(mu_q, theta_q)`, `gen_q`, no discounting.
    Pricing,
}

/// Transition-rate matrix of a finite-state Markov chain, stored row-major.
///
/// Construction only checks the shape. Sign and row-sum constraints are
/// reported by [`validate_model`] so that a malformed configuration yields a
/// complete list of problems instead of the first one.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix {
    dim: usize,
    entries: Vec<f64>,
}

impl GeneratorMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        let dim = rows.len();
        if dim == 0 {
            return Err(ModelError::EmptyGenerator);
        }
        let mut entries = Vec::with_capacity(dim * dim);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != dim {
                return Err(ModelError::NonSquareGenerator {
                    row: i,
                    len: row.len(),
                    dim,
                });
            }
            entries.extend(row);
        }
        Ok(Self { dim, entries })
    }

    /// The all-zero generator: every state is absorbing.
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "generator dimension must be at least 1");
        Self {
            dim,
            entries: vec![0.0; dim * dim],
        }
    }

    /// Two-state generator with switching rates `q12` (1 -> 2) and `q21` (2 -> 1).
    pub fn two_state(q12: f64, q21: f64) -> Self {
        Self {
            dim: 2,
            entries: vec![-q12, q12, q21, -q21],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn rate(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim).map(|i| self.row(i).to_vec()).collect()
    }

    /// Total exit rate of state `i`, i.e. `-q_ii`.
    pub fn exit_rate(&self, i: usize) -> f64 {
        -self.rate(i, i)
    }

    /// Off-diagonal `(j, q_ij)` pairs of row `i` with nonzero rate.
    pub fn off_diagonal(&self, i: usize) -> Vec<(usize, f64)> {
        self.row(i)
            .iter()
            .enumerate()
            .filter(|&(j, &q)| j != i && q != 0.0)
            .map(|(j, &q)| (j, q))
            .collect()
    }

    /// Stationary law `pi` with `pi Q = 0`, `sum pi = 1`; `None` when it is
    /// not unique (reducible chain).
    pub fn stationary_distribution(&self) -> Option<Vec<f64>> {
        let m = self.dim;
        // rows of Q^T with the last equation replaced by the normalization
        let mut a: Vec<Vec<f64>> = (0..m)
            .map(|j| {
                let mut row: Vec<f64> = (0..m).map(|i| self.rate(i, j)).collect();
                row.push(0.0);
                row
            })
            .collect();
        a[m - 1] = vec![1.0; m + 1];
        let scale = self.max_abs().max(1.0);
        for col in 0..m {
            let pivot = (col..m).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
            if a[pivot][col].abs() <= 1e-12 * scale {
                return None;
            }
            a.swap(col, pivot);
            let pivot_row = a[col].clone();
            for (r, row) in a.iter_mut().enumerate() {
                if r != col {
                    let f = row[col] / pivot_row[col];
                    for (x, p) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                        *x -= f * p;
                    }
                }
            }
        }
        Some((0..m).map(|i| (a[i][m] / a[i][i]).max(0.0)).collect())
    }

    fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0_f64, |acc, q| acc.max(q.abs()))
    }

    fn violations(&self, name: &str, out: &mut Vec<Violation>) {
        let scale = self.max_abs();
        for i in 0..self.dim {
            let row = self.row(i);
            for (j, &q) in row.iter().enumerate() {
                if !q.is_finite() {
                    out.push(Violation::new(
                        Some(i),
                        format!("{name}[{i}][{j}]"),
                        "entry must be finite",
                    ));
                } else if j == i && q > 0.0 {
                    out.push(Violation::new(
                        Some(i),
                        format!("{name}[{i}][{i}]"),
                        format!("diagonal rate must be <= 0, got {q}"),
                    ));
                } else if j != i && q < 0.0 {
                    out.push(Violation::new(
                        Some(i),
                        format!("{name}[{i}][{j}]"),
                        format!("off-diagonal rate must be >= 0, got {q}"),
                    ));
                }
            }
            let sum: f64 = row.iter().sum();
            if sum.abs() > 1e-12 * scale {
                out.push(Violation::new(
                    Some(i),
                    format!("{name}[{i}]"),
                    format!("row sum must be 0, got {sum}"),
                ));
            }
        }
    }
}

/// Per-regime CIR coefficients under both measures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeParams {
    /// Mean-reversion rate under the historical measure (1/year).
    pub mu_p: f64,
    /// Long-run mean under the historical measure (index points).
    pub theta_p: f64,
    /// Mean-reversion rate under the pricing measure (1/year).
    pub mu_q: f64,
    /// Long-run mean under the pricing measure (index points).
    pub theta_q: f64,
    /// Volatility coefficient of the square-root diffusion.
    pub sigma: f64,
}

impl RegimeParams {
    pub fn mean_reversion(&self, measure: Measure) -> (f64, f64) {
        match measure {
            Measure::Historical => (self.mu_p, self.theta_p),
            Measure::Pricing => (self.mu_q, self.theta_q),
        }
    }

    /// Drift `mu (theta - s)` under `measure`.
    #[inline]
    pub fn drift(&self, s: f64, measure: Measure) -> f64 {
        let (mu, theta) = self.mean_reversion(measure);
        mu * (theta - s)
    }

    /// Diffusion coefficient `sigma sqrt(s)`; zero for `s <= 0`.
    #[inline]
    pub fn diffusion(&self, s: f64) -> f64 {
        self.sigma * s.max(0.0).sqrt()
    }

    pub fn feller_holds(&self, measure: Measure) -> bool {
        let (mu, theta) = self.mean_reversion(measure);
        2.0 * mu * theta >= self.sigma * self.sigma
    }
}

/// All model inputs: regime coefficients, generators, discounting, costs and horizons.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketModel {
    pub regimes: Vec<RegimeParams>,
    /// Historical generator `q_ij`, used by the trading problems and the simulator.
    pub gen_p: GeneratorMatrix,
    /// Pricing generator, used by the futures PDE.
    pub gen_q: GeneratorMatrix,
    /// Subjective discount rate `r`.
    pub rate: f64,
    /// Cost `c` paid when selling (closing a long or opening a short).
    pub cost_close: f64,
    /// Cost `c_hat` paid when buying (opening a long or closing a short).
    pub cost_open: f64,
    /// Futures maturity `T` in years.
    pub maturity: f64,
    /// Trading deadline `T_hat`, `0 < T_hat <= T`.
    pub deadline: f64,
}

impl MarketModel {
    pub fn n_regimes(&self) -> usize {
        self.regimes.len()
    }

    pub fn generator(&self, measure: Measure) -> &GeneratorMatrix {
        match measure {
            Measure::Historical => &self.gen_p,
            Measure::Pricing => &self.gen_q,
        }
    }

    /// Discount rate entering the PDE operator; the futures PDE carries none.
    pub fn discount(&self, measure: Measure) -> f64 {
        match measure {
            Measure::Historical => self.rate,
            Measure::Pricing => 0.0,
        }
    }

    /// Largest long-run mean over regimes and both measures.
    pub fn max_theta(&self) -> f64 {
        self.regimes
            .iter()
            .fold(0.0_f64, |acc, p| acc.max(p.theta_p).max(p.theta_q))
    }

    pub fn validate(&self) -> ValidationReport {
        validate_model(self)
    }
}

/// One violated model constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// Offending regime, when the constraint is regime-specific.
    pub regime: Option<usize>,
    /// Path of the offending field, e.g. `regimes[1].sigma`.
    pub field: String,
    pub message: String,
}

impl Violation {
    fn new(regime: Option<usize>, field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            regime,
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<(), ModelError> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(ModelError::Invalid(self.violations))
        }
    }
}

/// Checks every model invariant and returns all violations found.
pub fn validate_model(model: &MarketModel) -> ValidationReport {
    let mut out = Vec::new();
    let m = model.regimes.len();
    if m == 0 {
        out.push(Violation::new(None, "regimes", "at least one regime is required"));
    }

    for (i, p) in model.regimes.iter().enumerate() {
        let fields = [
            ("mu_p", p.mu_p),
            ("theta_p", p.theta_p),
            ("mu_q", p.mu_q),
            ("theta_q", p.theta_q),
            ("sigma", p.sigma),
        ];
        let mut positive = true;
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                positive = false;
                out.push(Violation::new(
                    Some(i),
                    format!("regimes[{i}].{name}"),
                    format!("must be finite and > 0, got {value}"),
                ));
            }
        }
        if positive {
            for (measure, tag) in [(Measure::Historical, "p"), (Measure::Pricing, "q")] {
                if !p.feller_holds(measure) {
                    let (mu, theta) = p.mean_reversion(measure);
                    out.push(Violation::new(
                        Some(i),
                        format!("regimes[{i}].sigma"),
                        format!(
                            "Feller condition fails: 2*mu_{tag}*theta_{tag} = {} < sigma^2 = {}",
                            2.0 * mu * theta,
                            p.sigma * p.sigma
                        ),
                    ));
                }
            }
        }
    }

    for (gen, name) in [(&model.gen_p, "gen_p"), (&model.gen_q, "gen_q")] {
        if m > 0 && gen.dim() != m {
            out.push(Violation::new(
                None,
                name,
                format!("dimension {} does not match {m} regimes", gen.dim()),
            ));
        }
        gen.violations(name, &mut out);
    }

    let scalars = [
        ("rate", model.rate),
        ("cost_close", model.cost_close),
        ("cost_open", model.cost_open),
    ];
    for (name, value) in scalars {
        if !(value.is_finite() && value >= 0.0) {
            out.push(Violation::new(None, name, format!("must be >= 0, got {value}")));
        }
    }
    if !(model.maturity.is_finite() && model.maturity > 0.0) {
        out.push(Violation::new(
            None,
            "maturity",
            format!("must be > 0, got {}", model.maturity),
        ));
    }
    if !(model.deadline.is_finite() && model.deadline > 0.0) {
        out.push(Violation::new(
            None,
            "deadline",
            format!("must be > 0, got {}", model.deadline),
        ));
    } else if model.deadline > model.maturity {
        out.push(Violation::new(
            None,
            "deadline",
            format!(
                "trading deadline {} exceeds maturity {}",
                model.deadline, model.maturity
            ),
        ));
    }

    ValidationReport { violations: out }
}

/// Conditional mean `E[S_{t+tau} | S_t = s]` of a single-regime CIR process.
///
/// The mean solves a linear ODE that does not involve the volatility, so the
/// result is `theta + (s - theta) exp(-mu tau)`.
pub fn cir_conditional_mean(s: f64, tau: f64, mu: f64, theta: f64) -> Result<f64, ModelError> {
    if tau.is_nan() || tau < 0.0 {
        return Err(ModelError::NegativeHorizon(tau));
    }
    Ok(theta + (s - theta) * (-mu * tau).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn stationary_law_of_two_states() {
        let pi = GeneratorMatrix::two_state(0.1, 0.5).stationary_distribution().unwrap();
        assert!((pi[0] - 0.5 / 0.6).abs() < 1e-14);
        assert!((pi[1] - 0.1 / 0.6).abs() < 1e-14);
        assert!(GeneratorMatrix::zeros(2).stationary_distribution().is_none());
        assert_eq!(GeneratorMatrix::zeros(1).stationary_distribution(), Some(vec![1.0]));
    }

    #[test]
    fn stationary_law_balances_three_states() {
        let q = GeneratorMatrix::new(vec![vec![-0.3, 0.2, 0.1], vec![0.4, -0.5, 0.1], vec![0.05, 0.6, -0.65]]).unwrap();
        let pi = q.stationary_distribution().unwrap();
        assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        for j in 0..3 {
            let flow: f64 = (0..3).map(|i| pi[i] * q.rate(i, j)).sum();
            assert!(flow.abs() < 1e-14);
        }
    }

    fn figure_model() -> MarketModel {
        let regimes = vec![
            RegimeParams {
                mu_p: 8.57,
                theta_p: 17.58,
                mu_q: 4.55,
                theta_q: 18.16,
                sigma: 5.33,
            },
            RegimeParams {
                mu_p: 9.0,
                theta_p: 39.5,
                mu_q: 4.59,
                theta_q: 40.36,
                sigma: 6.42,
            },
        ];
        let gen = GeneratorMatrix::two_state(0.1, 0.5);
        MarketModel {
            regimes,
            gen_p: gen.clone(),
            gen_q: gen,
            rate: 0.05,
            cost_close: 0.01,
            cost_open: 0.01,
            maturity: 66.0 / 252.0,
            deadline: 22.0 / 252.0,
        }
    }

    #[test]
    fn figure_parameters_are_valid() {
        let model = figure_model();
        let p = model.regimes[0];
        assert!(2.0 * p.mu_q * p.theta_q >= p.sigma * p.sigma);
        assert!(validate_model(&model).is_valid());
    }

    #[test]
    fn swapped_generator_row_is_reported() {
        let mut model = figure_model();
        model.gen_p = GeneratorMatrix::new(vec![vec![0.1, -0.1], vec![0.5, -0.5]]).unwrap();
        let report = validate_model(&model);
        // [0.1, -0.1] still sums to zero; its signs are what is wrong
        assert!(!report.is_valid());
        assert!(report.violations.iter().any(|v| v.field == "gen_p[0][1]"));
        assert!(report.violations.iter().any(|v| v.field == "gen_p[0][0]"));
        assert!(report.violations.iter().all(|v| v.regime == Some(0)));
    }

    #[test]
    fn unbalanced_generator_row_is_reported() {
        let mut model = figure_model();
        model.gen_q = GeneratorMatrix::new(vec![vec![-0.1, 0.2], vec![0.5, -0.5]]).unwrap();
        let report = validate_model(&model);
        assert!(report
            .violations
            .iter()
            .any(|v| v.field == "gen_q[0]" && v.message.contains("row sum must be 0")));
    }

    #[test]
    fn feller_violation_is_reported_with_regime() {
        let mut model = figure_model();
        model.regimes[0].sigma = 100.0;
        let report = validate_model(&model);
        let feller: Vec<_> = report
            .violations
            .iter()
            .filter(|v| v.message.contains("Feller"))
            .collect();
        assert_eq!(feller.len(), 2);
        assert!(feller.iter().all(|v| v.regime == Some(0)));
    }

    #[test]
    fn deadline_after_maturity_is_reported() {
        let mut model = figure_model();
        model.deadline = 1.0;
        let report = validate_model(&model);
        assert!(report.violations.iter().any(|v| v.field == "deadline"));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let mut model = figure_model();
        model.gen_q = GeneratorMatrix::zeros(3);
        let report = validate_model(&model);
        assert!(report
            .violations
            .iter()
            .any(|v| v.field == "gen_q" && v.message.contains("dimension")));
    }

    #[test]
    fn non_square_generator_is_rejected() {
        assert!(GeneratorMatrix::new(vec![vec![0.0, 0.0], vec![0.0]]).is_err());
        assert!(GeneratorMatrix::new(vec![]).is_err());
    }

    #[test]
    fn conditional_mean_trivial_cases() {
        assert_eq!(cir_conditional_mean(18.16, 0.7, 4.55, 18.16).unwrap(), 18.16);
        assert_eq!(cir_conditional_mean(30.0, 0.0, 4.55, 18.16).unwrap(), 30.0);
        assert!(cir_conditional_mean(30.0, -1e-3, 4.55, 18.16).is_err());
    }

    #[test]
    fn conditional_mean_figure_value() {
        let v = cir_conditional_mean(30.0, 66.0 / 252.0, 4.55, 18.16).unwrap();
        assert!((v - 21.76).abs() < 0.01, "{v}");
    }

    proptest! {
        #[test]
        fn conditional_mean_tower_property(
            s in 0.0..100.0f64, t1 in 0.0..2.0f64, t2 in 0.0..2.0f64,
            mu in 0.1..10.0f64, theta in 1.0..60.0f64,
        ) {
            let direct = cir_conditional_mean(s, t1 + t2, mu, theta).unwrap();
            let mid = cir_conditional_mean(s, t1, mu, theta).unwrap();
            let nested = cir_conditional_mean(mid, t2, mu, theta).unwrap();
            prop_assert!((direct - nested).abs() <= 1e-10 * (1.0 + direct.abs()));
        }

        #[test]
        fn conditional_mean_monotone_in_level(
            s in 0.0..100.0f64, ds in 0.0..10.0f64, tau in 0.0..5.0f64,
            mu in 0.1..10.0f64, theta in 1.0..60.0f64,
        ) {
            let lo = cir_conditional_mean(s, tau, mu, theta).unwrap();
            let hi = cir_conditional_mean(s + ds, tau, mu, theta).unwrap();
            prop_assert!(hi >= lo);
        }

        #[test]
        fn validation_is_idempotent(sigma in 0.1..50.0f64, q in -1.0..1.0f64) {
            let mut model = figure_model();
            model.regimes[1].sigma = sigma;
            model.gen_p = GeneratorMatrix::new(vec![vec![-q, q], vec![0.5, -0.5]]).unwrap();
            let snapshot = model.clone();
            let a = validate_model(&model);
            let b = validate_model(&model);
            prop_assert_eq!(a, b);
            prop_assert_eq!(model, snapshot);
        }
    }

    #[test]
    fn conditional_mean_converges_to_theta() {
        let v = cir_conditional_mean(80.0, 50.0, 4.55, 18.16).unwrap();
        assert!((v - 18.16).abs() < 1e-12);
    }
}
