//! Run configuration: one TOML document per experiment.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discretization::GridSpec;
use crate::error::{GridError, ModelError, SolveError};
use crate::model::{GeneratorMatrix, MarketModel, RegimeParams};
use crate::simulator::{EnsembleSpec, InitialRegime, Strategy};
use crate::stopping::SolverConfig;

/// One trading month in years; the default grid has 200 steps per month.
const TRADING_MONTH: f64 = 22.0 / 252.0;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("grid: {0}")]
    Grid(#[from] GridError),
    #[error("solver: {0}")]
    Solver(#[from] SolveError),
    #[error("simulation.{field}: {message}")]
    Simulation { field: &'static str, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub regimes: Vec<RegimeParams>,
    pub gen_p: Vec<Vec<f64>>,
    /// Defaults to `gen_p`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gen_q: Option<Vec<Vec<f64>>>,
    pub rate: f64,
    #[serde(default)]
    pub cost_close: f64,
    #[serde(default)]
    pub cost_open: f64,
    pub maturity: f64,
    pub deadline: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub n_space: usize,
    /// Defaults to 200 steps per trading month of the deadline.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_time: Option<usize>,
    /// Defaults to three times the largest of the long-run means and `s0`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_max: Option<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            n_space: 200,
            n_time: None,
            s_max: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub s0: f64,
    /// Defaults to the solver time step.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt_sim: Option<f64>,
    pub n_paths: usize,
    pub seed: u64,
    pub strategy: String,
    /// 1-based; used when `initial_distribution` is `fixed`.
    pub initial_regime: usize,
    /// `fixed` or `stationary`.
    pub initial_distribution: String,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            s0: 30.0,
            dt_sim: None,
            n_paths: 100,
            seed: 1,
            strategy: "either".into(),
            initial_regime: 1,
            initial_distribution: "fixed".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    /// Surfaces written by `solve`, any of `V J U K P A B L`.
    pub surfaces: Vec<String>,
    pub boundaries: bool,
    pub paths: bool,
    /// Number of simulated paths written to `paths.csv`.
    pub paths_written: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            surfaces: ["V", "J", "U", "K", "P", "A", "B", "L"].map(String::from).to_vec(),
            boundaries: true,
            paths: true,
            paths_written: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let de = toml::Deserializer::parse(text).map_err(|e| ConfigError::Parse {
            path: "config".into(),
            message: e.to_string(),
        })?;
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Parse {
            path: e.path().to_string(),
            message: e.inner().message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    /// Checks everything the pipeline needs, so later conversions cannot fail.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.market_model()?;
        self.trading_grid()?;
        self.solver.validate()?;
        let sim = &self.simulation;
        if !(sim.s0 > 0.0 && sim.s0.is_finite()) {
            return Err(ConfigError::Simulation {
                field: "s0",
                message: format!("must be > 0, got {}", sim.s0),
            });
        }
        if let Some(dt) = sim.dt_sim {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(ConfigError::Simulation {
                    field: "dt_sim",
                    message: format!("must be > 0, got {dt}"),
                });
            }
        }
        if Strategy::parse(&sim.strategy).is_none() {
            return Err(ConfigError::Simulation {
                field: "strategy",
                message: format!("expected long-short, short-long or either, got {:?}", sim.strategy),
            });
        }
        if !matches!(sim.initial_distribution.as_str(), "fixed" | "stationary") {
            return Err(ConfigError::Simulation {
                field: "initial_distribution",
                message: format!("expected fixed or stationary, got {:?}", sim.initial_distribution),
            });
        }
        if sim.initial_distribution == "stationary" && self.market_model()?.gen_p.stationary_distribution().is_none() {
            return Err(ConfigError::Simulation {
                field: "initial_distribution",
                message: "gen_p has no unique stationary law".into(),
            });
        }
        if sim.initial_regime == 0 || sim.initial_regime > self.model.regimes.len() {
            return Err(ConfigError::Simulation {
                field: "initial_regime",
                message: format!("must lie in 1..={}", self.model.regimes.len()),
            });
        }
        Ok(())
    }

    pub fn market_model(&self) -> Result<MarketModel, ConfigError> {
        let m = &self.model;
        let gen_p = GeneratorMatrix::new(m.gen_p.clone())?;
        let gen_q = match &m.gen_q {
            Some(rows) => GeneratorMatrix::new(rows.clone())?,
            None => gen_p.clone(),
        };
        let model = MarketModel {
            regimes: m.regimes.clone(),
            gen_p,
            gen_q,
            rate: m.rate,
            cost_close: m.cost_close,
            cost_open: m.cost_open,
            maturity: m.maturity,
            deadline: m.deadline,
        };
        model.validate().into_result()?;
        Ok(model)
    }

    /// Trading grid on `[0, deadline]`.
    pub fn trading_grid(&self) -> Result<GridSpec, ConfigError> {
        let m = &self.model;
        let n_time = self
            .grid
            .n_time
            .unwrap_or_else(|| ((200.0 * m.deadline / TRADING_MONTH).round() as usize).max(1));
        let s_max = self.grid.s_max.unwrap_or_else(|| {
            let top = m
                .regimes
                .iter()
                .map(|r| r.theta_p.max(r.theta_q))
                .fold(self.simulation.s0, f64::max);
            3.0 * top
        });
        Ok(GridSpec::new(self.grid.n_space, n_time, s_max, m.deadline)?)
    }

    pub fn ensemble(&self) -> Result<EnsembleSpec, ConfigError> {
        let grid = self.trading_grid()?;
        let sim = &self.simulation;
        Ok(EnsembleSpec {
            s0: sim.s0,
            dt_sim: sim.dt_sim.unwrap_or(grid.dt()),
            n_paths: sim.n_paths,
            seed: sim.seed,
            initial: if sim.initial_distribution == "stationary" {
                InitialRegime::Stationary
            } else {
                InitialRegime::Fixed(sim.initial_regime - 1)
            },
            horizon: self.model.deadline,
            strategy: Strategy::parse(&sim.strategy).ok_or(ConfigError::Simulation {
                field: "strategy",
                message: format!("unknown strategy {:?}", sim.strategy),
            })?,
        })
    }
}
