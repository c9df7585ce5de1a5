use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vixtrade::config::{ConfigError, RunConfig};
use vixtrade::discretization::SchemeOptions;
use vixtrade::futures::price_futures_surface;
use vixtrade::output;
use vixtrade::simulator::{run_ensemble, summarize_pnl, TradeLog};
use vixtrade::stopping::{solve_all, Solution};

#[derive(Parser)]
#[command(
    name = "vixtrade",
    version,
    about = "Futures prices, trading boundaries and simulated strategies for a regime-switching CIR index"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Futures surface on [0, maturity].
    Price(Common),
    /// All value surfaces and trading boundaries.
    Solve(Common),
    /// Solve, then simulate and trade an ensemble of paths.
    Simulate(Common),
    /// Solve and export the timing premium only.
    Premium(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Simulation seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    quiet: bool,
}

enum Failure {
    Config(String),
    Numeric(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

fn io_failure(path: &Path) -> impl Fn(csv::Error) -> Failure + '_ {
    move |e| Failure::Config(format!("cannot write {}: {e}", path.display()))
}

struct Run {
    cfg: RunConfig,
    out: PathBuf,
    quiet: bool,
}

impl Run {
    fn new(args: &Common) -> Result<Self, Failure> {
        let mut cfg = RunConfig::load(&args.config)?;
        if let Some(seed) = args.seed {
            cfg.simulation.seed = seed;
        }
        let out = args.out.clone().unwrap_or_else(|| cfg.output.directory.clone());
        std::fs::create_dir_all(&out).map_err(|e| Failure::Config(format!("cannot create {}: {e}", out.display())))?;
        Ok(Self {
            cfg,
            out,
            quiet: args.quiet,
        })
    }

    fn file(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }

    fn solve(&self) -> Result<Solution, Failure> {
        let model = self.cfg.market_model()?;
        let grid = self.cfg.trading_grid()?;
        self.say(format!(
            "solving on {} x {} nodes, s_max {}, deadline {}",
            grid.space_nodes(),
            grid.time_nodes(),
            grid.s_max,
            grid.t_end
        ));
        let sol = solve_all(&model, &grid, &self.cfg.solver, SchemeOptions::default())
            .map_err(|e| Failure::Numeric(e.to_string()))?;
        self.say(format!("max complementarity residual {:e}", sol.max_residual()));
        if sol.boundaries.non_contiguous_count() > 0 {
            eprintln!(
                "warning: {} time slices have split exercise sets (see diagnostics.csv)",
                sol.boundaries.non_contiguous_count()
            );
        }
        Ok(sol)
    }

    fn write_solution(&self, sol: &Solution, only_premium: bool) -> Result<(), Failure> {
        for (name, surface) in sol.surfaces() {
            let wanted = if only_premium {
                name == "L"
            } else {
                self.cfg.output.surfaces.iter().any(|s| s == name)
            };
            if wanted {
                let path = self.file(&format!("{name}.csv"));
                output::write_surface_file(&path, surface).map_err(io_failure(&path))?;
            }
        }
        if !only_premium {
            if self.cfg.output.boundaries {
                let path = self.file("boundaries.csv");
                output::write_boundaries(&path, &sol.boundaries).map_err(io_failure(&path))?;
            }
            let path = self.file("diagnostics.csv");
            output::write_diagnostics(&path, sol).map_err(io_failure(&path))?;
        }
        Ok(())
    }
}

fn price(run: &Run) -> Result<(), Failure> {
    let model = run.cfg.market_model()?;
    let grid = run
        .cfg
        .trading_grid()?
        .with_horizon(model.maturity)
        .map_err(ConfigError::from)?;
    let f =
        price_futures_surface(&model, &grid, SchemeOptions::default()).map_err(|e| Failure::Numeric(e.to_string()))?;
    let path = run.file("futures.csv");
    output::write_surface_file(&path, &f).map_err(io_failure(&path))?;
    run.say(format!("wrote {}", path.display()));
    Ok(())
}

fn simulate(run: &Run) -> Result<(), Failure> {
    let sol = run.solve()?;
    let model = run.cfg.market_model()?;
    let spec = run.cfg.ensemble()?;
    let runs =
        run_ensemble(&model, &sol.boundaries, &sol.futures_full, &spec).map_err(|e| Failure::Numeric(e.to_string()))?;
    let logs: Vec<TradeLog> = runs.iter().map(|r| r.log.clone()).collect();
    let summary = summarize_pnl(&logs, model.rate);

    let limit = if run.cfg.output.paths {
        run.cfg.output.paths_written
    } else {
        0
    };
    for (name, result) in [
        ("paths.csv", output::write_paths(&run.file("paths.csv"), &runs, limit)),
        ("trades.csv", output::write_trades(&run.file("trades.csv"), &runs)),
        ("summary.csv", output::write_summary(&run.file("summary.csv"), &runs)),
        (
            "ensemble.csv",
            output::write_ensemble(&run.file("ensemble.csv"), spec.seed, spec.strategy.as_str(), &summary),
        ),
    ] {
        result.map_err(io_failure(&run.file(name)))?;
    }
    run.say(format!(
        "{} paths, {:.3} round trips per path, discounted P&L mean {:.6} (sd {:.6})",
        summary.count, summary.trade_frequency, summary.mean, summary.stdev
    ));
    Ok(())
}

fn main() -> ExitCode {
    // usage errors exit 1, like config errors
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let (args, command) = match &cli.command {
        Command::Price(a) => (a, "price"),
        Command::Solve(a) => (a, "solve"),
        Command::Simulate(a) => (a, "simulate"),
        Command::Premium(a) => (a, "premium"),
    };
    let result = Run::new(args).and_then(|run| match command {
        "price" => price(&run),
        "solve" => run.solve().and_then(|sol| run.write_solution(&sol, false)),
        "premium" => run.solve().and_then(|sol| run.write_solution(&sol, true)),
        _ => simulate(&run),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Numeric(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
