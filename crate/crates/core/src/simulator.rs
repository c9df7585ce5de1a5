//! Regime-switching CIR paths and execution of the boundary strategies
//! along them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;

use crate::error::SimError;
use crate::model::{GeneratorMatrix, MarketModel, Measure};
use crate::stopping::{BoundarySet, ENTRY_LONG, ENTRY_SHORT};
use crate::surface::Surface;

/// Piecewise-constant regime trajectory on `[0, horizon]`.
///
/// Regimes are 0-based. `starts[k]` is the time segment `k` begins; the
/// first segment starts at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimePath {
    starts: Vec<f64>,
    regimes: Vec<usize>,
    horizon: f64,
}

impl RegimePath {
    pub fn new(starts: Vec<f64>, regimes: Vec<usize>, horizon: f64) -> Result<Self, SimError> {
        if starts.is_empty() || starts.len() != regimes.len() {
            return Err(SimError::Invalid("need one regime per segment start".into()));
        }
        if starts[0] != 0.0 {
            return Err(SimError::Invalid("first segment must start at t = 0".into()));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(SimError::Invalid(format!("horizon must be > 0, got {horizon}")));
        }
        if starts.windows(2).any(|w| w[1].is_nan() || w[1] <= w[0]) || starts.last().is_some_and(|&t| t >= horizon) {
            return Err(SimError::Invalid(
                "switch times must increase strictly within the horizon".into(),
            ));
        }
        if regimes.windows(2).any(|w| w[0] == w[1]) {
            return Err(SimError::Invalid("consecutive segments must differ in regime".into()));
        }
        Ok(Self {
            starts,
            regimes,
            horizon,
        })
    }

    pub fn constant(regime: usize, horizon: f64) -> Result<Self, SimError> {
        Self::new(vec![0.0], vec![regime], horizon)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn switch_times(&self) -> &[f64] {
        &self.starts[1..]
    }

    /// `(start, end, regime)` for every segment.
    pub fn segments(&self) -> impl Iterator<Item = (f64, f64, usize)> + '_ {
        (0..self.regimes.len()).map(move |k| {
            let end = self.starts.get(k + 1).copied().unwrap_or(self.horizon);
            (self.starts[k], end, self.regimes[k])
        })
    }

    /// Regime in force at `t` (right-continuous at switches).
    pub fn regime_at(&self, t: f64) -> usize {
        let k = self.starts.partition_point(|&s| s <= t);
        self.regimes[k.max(1) - 1]
    }
}

/// Markov chain with generator `gen` started in `initial`.
///
/// Holding times are exponential with rate `-q_ii`; the next state is `j`
/// with probability `q_ij / -q_ii`. An absorbing state ends the path.
pub fn simulate_regimes(
    gen: &GeneratorMatrix,
    initial: usize,
    horizon: f64,
    seed: u64,
) -> Result<RegimePath, SimError> {
    if initial >= gen.dim() {
        return Err(SimError::Invalid(format!(
            "initial regime {} outside 1..={}",
            initial + 1,
            gen.dim()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts = vec![0.0];
    let mut regimes = vec![initial];
    let mut t = 0.0;
    let mut state = initial;
    loop {
        let rate = gen.exit_rate(state);
        if rate <= 0.0 {
            break;
        }
        t += Exp::new(rate)
            .map_err(|e| SimError::Invalid(e.to_string()))?
            .sample(&mut rng);
        if t >= horizon {
            break;
        }
        let u: f64 = rng.random::<f64>() * rate;
        let targets = gen.off_diagonal(state);
        let mut acc = 0.0;
        let mut next = targets.last().map(|&(j, _)| j).unwrap_or(state);
        for &(j, q) in &targets {
            acc += q;
            if u < acc {
                next = j;
                break;
            }
        }
        starts.push(t);
        regimes.push(next);
        state = next;
    }
    RegimePath::new(starts, regimes, horizon)
}

/// Simulated levels on a node grid that contains every switch time.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePath {
    pub times: Vec<f64>,
    pub levels: Vec<f64>,
    /// Regime in force at each node; at a switch node this is the new regime.
    pub regimes: Vec<usize>,
    pub regime_path: RegimePath,
}

impl PricePath {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Whether the regime changes at node `k`.
    pub fn switches_at(&self, k: usize) -> bool {
        k > 0 && self.regimes[k] != self.regimes[k - 1]
    }
}

/// Full-truncation Euler under the historical dynamics.
///
/// Each constant-regime segment is split into equal sub-steps no longer than
/// `dt_sim`, so segment endpoints are nodes.
pub fn simulate_cir(
    model: &MarketModel,
    regime_path: &RegimePath,
    s0: f64,
    dt_sim: f64,
    seed: u64,
) -> Result<PricePath, SimError> {
    if !(s0 > 0.0 && s0.is_finite()) {
        return Err(SimError::Invalid(format!("s0 must be > 0, got {s0}")));
    }
    if !(dt_sim > 0.0 && dt_sim.is_finite()) {
        return Err(SimError::Invalid(format!("dt_sim must be > 0, got {dt_sim}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut times = vec![0.0];
    let mut levels = vec![s0];
    let mut regimes = vec![regime_path.regime_at(0.0)];
    let mut s = s0;
    for (a, b, i) in regime_path.segments() {
        let p = model
            .regimes
            .get(i)
            .ok_or_else(|| SimError::Invalid(format!("regime {} not in model", i + 1)))?;
        let (mu, theta) = p.mean_reversion(Measure::Historical);
        let steps = ((b - a) / dt_sim - 1e-9).ceil().max(1.0) as usize;
        let h = (b - a) / steps as f64;
        let sq = h.sqrt();
        // the regime of the segment's first node is already recorded
        *regimes.last_mut().unwrap() = i;
        for k in 1..=steps {
            let z: f64 = rng.sample(StandardNormal);
            let sp = s.max(0.0);
            s = (s + mu * (theta - sp) * h + p.sigma * sp.sqrt() * sq * z).max(0.0);
            times.push(if k == steps { b } else { a + k as f64 * h });
            levels.push(s);
            regimes.push(i);
        }
    }
    Ok(PricePath {
        times,
        levels,
        regimes,
        regime_path: regime_path.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    LongShort,
    ShortLong,
    Either,
}

impl Strategy {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "long-short" => Some(Self::LongShort),
            "short-long" => Some(Self::ShortLong),
            "either" => Some(Self::Either),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::LongShort => "long-short",
            Self::ShortLong => "short-long",
            Self::Either => "either",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    OpenLong,
    OpenShort,
    Close,
    ForcedSwitchClose,
    DeadlineClose,
}

impl Action {
    pub fn as_str(self) -> &'static str {
        match self {
            Action::OpenLong => "open-long",
            Action::OpenShort => "open-short",
            Action::Close => "close",
            Action::ForcedSwitchClose => "forced-switch-close",
            Action::DeadlineClose => "deadline-close",
        }
    }

    pub fn is_open(self) -> bool {
        matches!(self, Action::OpenLong | Action::OpenShort)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradeEvent {
    pub time: f64,
    pub node: usize,
    pub action: Action,
    /// Futures price at the event.
    pub price: f64,
    /// Transaction cost charged on this leg.
    pub cost: f64,
    pub regime: usize,
    /// Signed cash flow of the leg, costs included.
    pub cash: f64,
    /// Realized P&L of completed round trips after this event.
    pub pnl_to_date: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TradeLog {
    pub events: Vec<TradeEvent>,
    pub pnl: f64,
    /// P&L with each leg discounted by `exp(-r t)`.
    pub pnl_discounted: f64,
}

impl TradeLog {
    pub fn round_trips(&self) -> usize {
        self.events.iter().filter(|e| !e.action.is_open()).count()
    }

    pub fn discounted_pnl(&self, rate: f64) -> f64 {
        self.events.iter().map(|e| e.cash * (-rate * e.time).exp()).sum()
    }

    /// Opens and closes alternate, starting with an open and ending flat.
    pub fn is_well_formed(&self) -> bool {
        self.events.len().is_multiple_of(2)
            && self
                .events
                .iter()
                .enumerate()
                .all(|(k, e)| e.action.is_open() == (k % 2 == 0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Position {
    Flat,
    Long,
    Short,
}

/// Runs `strategy` along `path` against precomputed boundaries.
///
/// At every node the open position is tested against the exit boundary of
/// the regime in force, then a flat book is tested against the entry
/// boundaries, so a close and a new open may share a node. A close caused by
/// a regime switch at that node is logged as [`Action::ForcedSwitchClose`].
/// The last node closes any open position and opens nothing. Futures prices
/// are read from `futures` by bilinear interpolation; boundaries are held
/// constant between solver time nodes.
pub fn execute_strategy(
    path: &PricePath,
    boundaries: &BoundarySet,
    futures: &Surface,
    strategy: Strategy,
    model: &MarketModel,
) -> Result<TradeLog, SimError> {
    let (c, ch, r) = (model.cost_close, model.cost_open, model.rate);
    let s_max = futures.grid.s_max.min(boundaries.grid.s_max);
    let last = path.len().saturating_sub(1);
    let mut log = TradeLog::default();
    let mut position = Position::Flat;
    let mut realized = 0.0;
    let mut open_cash = 0.0;

    for k in 0..path.len() {
        let (t, s, i) = (path.times[k], path.levels[k], path.regimes[k]);
        if s > s_max {
            return Err(SimError::OutsideGrid {
                node: k,
                level: s,
                s_max,
            });
        }
        let level = |label: &str| boundaries.level_at(label, i, t);
        let push = |log: &mut TradeLog, action: Action, price: f64, cost: f64, cash: f64, realized: f64| {
            log.events.push(TradeEvent {
                time: t,
                node: k,
                action,
                price,
                cost,
                regime: i,
                cash,
                pnl_to_date: realized,
            });
            log.pnl += cash;
            log.pnl_discounted += cash * (-r * t).exp();
        };

        if position != Position::Flat {
            let exit = if k == last {
                Some(Action::DeadlineClose)
            } else {
                let hit = match position {
                    Position::Long => level("V").is_some_and(|b| s >= b),
                    _ => level("U").is_some_and(|b| s <= b),
                };
                hit.then(|| {
                    if path.switches_at(k) {
                        Action::ForcedSwitchClose
                    } else {
                        Action::Close
                    }
                })
            };
            if let Some(action) = exit {
                let f = futures.value_at(t, s, i)?;
                let (cost, cash) = match position {
                    Position::Long => (c, f - c),
                    _ => (ch, -(f + ch)),
                };
                realized += open_cash + cash;
                push(&mut log, action, f, cost, cash, realized);
                position = Position::Flat;
            }
        }

        if position == Position::Flat && k < last {
            let long = || level(ENTRY_LONG).is_some_and(|b| s <= b);
            let short = || level(ENTRY_SHORT).is_some_and(|b| s >= b);
            let entry = match strategy {
                Strategy::LongShort => level("J").is_some_and(|b| s <= b).then_some(Position::Long),
                Strategy::ShortLong => level("K").is_some_and(|b| s >= b).then_some(Position::Short),
                Strategy::Either => {
                    if long() {
                        Some(Position::Long)
                    } else if short() {
                        Some(Position::Short)
                    } else {
                        None
                    }
                }
            };
            if let Some(p) = entry {
                let f = futures.value_at(t, s, i)?;
                let (action, cost, cash) = match p {
                    Position::Long => (Action::OpenLong, ch, -(f + ch)),
                    _ => (Action::OpenShort, c, f - c),
                };
                open_cash = cash;
                push(&mut log, action, f, cost, cash, realized);
                position = p;
            }
        }
    }
    Ok(log)
}

/// Aggregates of discounted P&L over many logs.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PnlSummary {
    pub count: usize,
    pub mean: f64,
    pub stdev: f64,
    pub min: f64,
    pub max: f64,
    pub mean_raw: f64,
    /// Mean number of round trips per log.
    pub trade_frequency: f64,
}

pub fn summarize_pnl(logs: &[TradeLog], rate: f64) -> PnlSummary {
    if logs.is_empty() {
        return PnlSummary::default();
    }
    let n = logs.len() as f64;
    let pnl: Vec<f64> = logs.iter().map(|l| l.discounted_pnl(rate)).collect();
    let mean = pnl.iter().sum::<f64>() / n;
    let var = if logs.len() > 1 {
        pnl.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    PnlSummary {
        count: logs.len(),
        mean,
        stdev: var.sqrt(),
        min: pnl.iter().copied().fold(f64::INFINITY, f64::min),
        max: pnl.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean_raw: logs.iter().map(|l| l.pnl).sum::<f64>() / n,
        trade_frequency: logs.iter().map(|l| l.round_trips() as f64).sum::<f64>() / n,
    }
}

/// Starting regime of ensemble paths (0-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialRegime {
    Fixed(usize),
    /// Drawn per path from the stationary law of the historical generator.
    Stationary,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleSpec {
    pub s0: f64,
    pub dt_sim: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub initial: InitialRegime,
    pub horizon: f64,
    pub strategy: Strategy,
}

/// Seeds `(regime, price)` of path `p`: stream `p` of a generator keyed by `seed`.
pub fn path_seeds(seed: u64, p: usize) -> (u64, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(p as u64);
    (rng.random(), rng.random())
}

#[derive(Debug, Clone)]
pub struct PathRun {
    pub index: usize,
    pub regime_seed: u64,
    pub price_seed: u64,
    pub path: PricePath,
    pub log: TradeLog,
}

fn draw_initial(law: &[f64], seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in law.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    law.len() - 1
}

/// Simulates and trades `spec.n_paths` independent paths in parallel;
/// results are in path order and independent of the thread count.
pub fn run_ensemble(
    model: &MarketModel,
    boundaries: &BoundarySet,
    futures: &Surface,
    spec: &EnsembleSpec,
) -> Result<Vec<PathRun>, SimError> {
    let law = match spec.initial {
        InitialRegime::Fixed(_) => None,
        InitialRegime::Stationary => Some(
            model
                .gen_p
                .stationary_distribution()
                .ok_or_else(|| SimError::Invalid("historical generator has no unique stationary law".into()))?,
        ),
    };
    (0..spec.n_paths)
        .into_par_iter()
        .map(|p| {
            let (regime_seed, price_seed) = path_seeds(spec.seed, p);
            let initial = match (spec.initial, &law) {
                (InitialRegime::Fixed(i), _) => i,
                (_, Some(law)) => draw_initial(law, regime_seed),
                (_, None) => unreachable!(),
            };
            let regimes = simulate_regimes(&model.gen_p, initial, spec.horizon, regime_seed)?;
            let path = simulate_cir(model, &regimes, spec.s0, spec.dt_sim, price_seed)?;
            let log = execute_strategy(&path, boundaries, futures, spec.strategy, model)?;
            Ok(PathRun {
                index: p,
                regime_seed,
                price_seed,
                path,
                log,
            })
        })
        .collect()
}
