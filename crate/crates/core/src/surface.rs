use crate::discretization::GridSpec;
use crate::error::QueryError;

/// A function of `(regime, t, s)` sampled on a [`GridSpec`].
///
/// Values are stored regime-major, then time, then space, so that
/// `slice(i, n)` is one contiguous space profile.
#[derive(Debug, Clone, PartialEq)]
pub struct Surface {
    pub label: String,
    pub grid: GridSpec,
    n_regimes: usize,
    values: Vec<f64>,
}

impl Surface {
    pub fn zeros(label: impl Into<String>, grid: GridSpec, n_regimes: usize) -> Self {
        Self {
            label: label.into(),
            grid,
            n_regimes,
            values: vec![0.0; n_regimes * grid.time_nodes() * grid.space_nodes()],
        }
    }

    /// Samples `f(regime, n, m)` at every node.
    pub fn from_fn(
        label: impl Into<String>,
        grid: GridSpec,
        n_regimes: usize,
        f: impl Fn(usize, usize, usize) -> f64,
    ) -> Self {
        let mut out = Self::zeros(label, grid, n_regimes);
        for i in 0..n_regimes {
            for n in 0..grid.time_nodes() {
                for (m, v) in out.slice_mut(i, n).iter_mut().enumerate() {
                    *v = f(i, n, m);
                }
            }
        }
        out
    }

    pub fn n_regimes(&self) -> usize {
        self.n_regimes
    }

    #[inline]
    fn offset(&self, i: usize, n: usize) -> usize {
        (i * self.grid.time_nodes() + n) * self.grid.space_nodes()
    }

    #[inline]
    pub fn get(&self, i: usize, n: usize, m: usize) -> f64 {
        self.values[self.offset(i, n) + m]
    }

    pub fn slice(&self, i: usize, n: usize) -> &[f64] {
        let o = self.offset(i, n);
        &self.values[o..o + self.grid.space_nodes()]
    }

    pub fn slice_mut(&mut self, i: usize, n: usize) -> &mut [f64] {
        let o = self.offset(i, n);
        let len = self.grid.space_nodes();
        &mut self.values[o..o + len]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Nodewise map into a new surface with the same grid.
    pub fn map(&self, label: impl Into<String>, f: impl Fn(f64) -> f64) -> Self {
        Self {
            label: label.into(),
            grid: self.grid,
            n_regimes: self.n_regimes,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Nodewise combination of two surfaces on the same grid.
    ///
    /// Panics when the grids or regime counts differ.
    pub fn zip_map(&self, other: &Surface, label: impl Into<String>, f: impl Fn(f64, f64) -> f64) -> Self {
        assert!(
            self.grid == other.grid && self.n_regimes == other.n_regimes,
            "surfaces {} and {} live on different grids",
            self.label,
            other.label
        );
        Self {
            label: label.into(),
            grid: self.grid,
            n_regimes: self.n_regimes,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    /// Largest absolute nodewise difference.
    pub fn max_abs_diff(&self, other: &Surface) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    /// Bilinear interpolation at `(t, s)` in regime `i`; exact at nodes.
    pub fn value_at(&self, t: f64, s: f64, i: usize) -> Result<f64, QueryError> {
        if i >= self.n_regimes {
            return Err(QueryError::Regime {
                regime: i,
                n_regimes: self.n_regimes,
            });
        }
        let g = &self.grid;
        let t_tol = 1e-12 * g.t_end.max(1.0);
        let s_tol = 1e-12 * g.s_max.max(1.0);
        if !(t >= -t_tol && t <= g.t_end + t_tol) {
            return Err(QueryError::Time { t, t_end: g.t_end });
        }
        if !(s >= -s_tol && s <= g.s_max + s_tol) {
            return Err(QueryError::Level { s, s_max: g.s_max });
        }
        let (n0, wt) = locate(t.clamp(0.0, g.t_end) / g.dt(), g.n_time);
        let (m0, ws) = locate(s.clamp(0.0, g.s_max) / g.ds(), g.n_space);
        let lerp = |n: usize| {
            let row = self.slice(i, n);
            if ws == 0.0 {
                row[m0]
            } else {
                row[m0] * (1.0 - ws) + row[m0 + 1] * ws
            }
        };
        let lo = lerp(n0);
        Ok(if wt == 0.0 {
            lo
        } else {
            lo * (1.0 - wt) + lerp(n0 + 1) * wt
        })
    }

    /// Resamples onto another time lattice with the same space nodes,
    /// interpolating linearly in time where the nodes do not coincide.
    pub fn resample_time(&self, grid: &GridSpec) -> Result<Surface, QueryError> {
        assert_eq!(grid.n_space, self.grid.n_space);
        let mut out = Surface::zeros(self.label.clone(), *grid, self.n_regimes);
        for i in 0..self.n_regimes {
            for n in 0..grid.time_nodes() {
                let t = grid.t(n);
                if t > self.grid.t_end * (1.0 + 1e-12) {
                    return Err(QueryError::Time {
                        t,
                        t_end: self.grid.t_end,
                    });
                }
                let (n0, w) = locate(t.min(self.grid.t_end) / self.grid.dt(), self.grid.n_time);
                for m in 0..grid.space_nodes() {
                    let a = self.get(i, n0, m);
                    out.slice_mut(i, n)[m] = if w == 0.0 {
                        a
                    } else {
                        a * (1.0 - w) + self.get(i, n0 + 1, m) * w
                    };
                }
            }
        }
        Ok(out)
    }
}

/// Splits a fractional node coordinate into `(lower node, weight of upper node)`,
/// snapping to a node within `1e-9` of a cell.
fn locate(x: f64, max_node: usize) -> (usize, f64) {
    let nearest = x.round();
    if (x - nearest).abs() < 1e-9 {
        return (nearest as usize, 0.0);
    }
    let lo = (x.floor() as usize).min(max_node - 1);
    (lo, x - lo as f64)
}
