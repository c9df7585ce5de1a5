use crate::discretization::GridSpec;
use crate::surface::Surface;

use super::cascade::{EntryRewards, ENTRY_LONG, ENTRY_SHORT};

/// Where the exercise region lies relative to its boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Above,
    Below,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Above => "exercise-above",
            Side::Below => "exercise-below",
        }
    }
}

/// Which contact nodes count as exercise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExerciseRule<'a> {
    /// Every node with `|g - h| <= tol`.
    Contact,
    /// Contact nodes whose reward exceeds `exercise_tolerance(price)`. Used
    /// for entry problems, where `g = h = 0` means nothing is gained by
    /// entering; the reward inherits the round-off of values of size `price`.
    PositiveReward { price: &'a Surface },
}

/// Contact tolerance `1e-7 * (1 + |h|)`.
#[inline]
pub fn exercise_tolerance(h: f64) -> f64 {
    1e-7 * (1.0 + h.abs())
}

/// One free boundary of one problem in one regime, per trading time node.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryCurve {
    pub label: String,
    pub regime: usize,
    pub side: Side,
    /// Boundary node, `None` where the exercise set is empty.
    pub nodes: Vec<Option<usize>>,
    /// Time nodes whose exercise set splits into more than one run.
    pub non_contiguous: Vec<usize>,
}

impl BoundaryCurve {
    fn from_masks(label: &str, regime: usize, side: Side, masks: impl Iterator<Item = Vec<bool>>) -> Self {
        let mut nodes = Vec::new();
        let mut non_contiguous = Vec::new();
        for (n, mask) in masks.enumerate() {
            let first = mask.iter().position(|&e| e);
            let last = mask.iter().rposition(|&e| e);
            if let (Some(a), Some(b)) = (first, last) {
                if mask[a..=b].iter().any(|&e| !e) {
                    non_contiguous.push(n);
                }
            }
            nodes.push(match side {
                Side::Above => first,
                Side::Below => last,
            });
        }
        Self {
            label: label.to_string(),
            regime,
            side,
            nodes,
            non_contiguous,
        }
    }
}

/// A row of the boundary export.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryRow<'a> {
    pub t: f64,
    pub regime: usize,
    pub problem: &'a str,
    pub side: Side,
    pub level: f64,
}

/// Free boundaries of any number of problems on one trading grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySet {
    pub grid: GridSpec,
    pub curves: Vec<BoundaryCurve>,
}

impl BoundarySet {
    pub fn new(grid: GridSpec) -> Self {
        Self {
            grid,
            curves: Vec::new(),
        }
    }

    /// Appends the curves of `other`; both sets must share the grid.
    pub fn extend(&mut self, other: BoundarySet) {
        assert_eq!(self.grid, other.grid, "boundary sets on different grids");
        self.curves.extend(other.curves);
    }

    pub fn curve(&self, label: &str, regime: usize) -> Option<&BoundaryCurve> {
        self.curves.iter().find(|c| c.label == label && c.regime == regime)
    }

    /// Boundary level at time node `n`.
    pub fn level(&self, label: &str, regime: usize, n: usize) -> Option<f64> {
        let c = self.curve(label, regime)?;
        c.nodes.get(n).copied().flatten().map(|m| self.grid.s(m))
    }

    /// Boundary level at time `t`, held constant from the nearest earlier node.
    pub fn level_at(&self, label: &str, regime: usize, t: f64) -> Option<f64> {
        let x = (t / self.grid.dt()).max(0.0);
        let near = x.round();
        let n = if (x - near).abs() < 1e-9 { near } else { x.floor() } as usize;
        self.level(label, regime, n.min(self.grid.n_time))
    }

    pub fn side(&self, label: &str) -> Option<Side> {
        self.curves.iter().find(|c| c.label == label).map(|c| c.side)
    }

    /// Total count of flagged non-contiguous exercise sets.
    pub fn non_contiguous_count(&self) -> usize {
        self.curves.iter().map(|c| c.non_contiguous.len()).sum()
    }

    /// Rows ordered by problem, regime, then time; absent boundaries are skipped.
    pub fn rows(&self) -> impl Iterator<Item = BoundaryRow<'_>> {
        self.curves.iter().flat_map(move |c| {
            c.nodes.iter().enumerate().filter_map(move |(n, m)| {
                m.map(|m| BoundaryRow {
                    t: self.grid.t(n),
                    regime: c.regime,
                    problem: &c.label,
                    side: c.side,
                    level: self.grid.s(m),
                })
            })
        })
    }
}

fn is_exercise(g: f64, h: f64, price: Option<f64>) -> bool {
    (g - h).abs() <= exercise_tolerance(h) && price.is_none_or(|f| h > exercise_tolerance(f))
}

/// Boundary of the contact set of `g` with `h` in every regime.
///
/// For exercise-above problems the boundary is the smallest exercise node,
/// for exercise-below the largest; split exercise sets are flagged in
/// [`BoundaryCurve::non_contiguous`].
pub fn extract_boundaries(label: &str, g: &Surface, h: &Surface, side: Side, rule: ExerciseRule) -> BoundarySet {
    assert_eq!(g.grid, h.grid, "value and obstacle on different grids");
    let grid = g.grid;
    let curves = (0..g.n_regimes())
        .map(|i| {
            let masks = (0..grid.time_nodes()).map(move |n| {
                let price = match rule {
                    ExerciseRule::Contact => None,
                    ExerciseRule::PositiveReward { price } => Some(price.slice(i, n)),
                };
                g.slice(i, n)
                    .iter()
                    .zip(h.slice(i, n))
                    .enumerate()
                    .map(|(m, (&g, &h))| is_exercise(g, h, price.map(|f| f[m])))
                    .collect()
            });
            BoundaryCurve::from_masks(label, i, side, masks)
        })
        .collect();
    BoundarySet { grid, curves }
}

/// Long (`P = A`, exercise below) and short (`P = B`, exercise above) entry
/// boundaries of the entry value `p`. A contact node belongs to the larger
/// reward, ties going to the long side; rewards are floored as in
/// [`ExerciseRule::PositiveReward`] against `price`.
pub fn entry_boundaries(p: &Surface, rewards: &EntryRewards, price: &Surface) -> BoundarySet {
    let grid = p.grid;
    let mut curves = Vec::new();
    for i in 0..p.n_regimes() {
        let classify = |n: usize, long: bool| -> Vec<bool> {
            let (a, b, f) = (rewards.a.slice(i, n), rewards.b.slice(i, n), price.slice(i, n));
            p.slice(i, n)
                .iter()
                .enumerate()
                .map(|(m, &pv)| {
                    let h = a[m].max(b[m]);
                    is_exercise(pv, h, Some(f[m])) && (a[m] >= b[m]) == long
                })
                .collect()
        };
        let long = (0..grid.time_nodes()).map(|n| classify(n, true));
        curves.push(BoundaryCurve::from_masks(ENTRY_LONG, i, Side::Below, long));
        let short = (0..grid.time_nodes()).map(|n| classify(n, false));
        curves.push(BoundaryCurve::from_masks(ENTRY_SHORT, i, Side::Above, short));
    }
    BoundarySet { grid, curves }
}
