//! Acceptance suite. Each test prints one `criterion N: PASS|FAIL - detail`
//! line straight to stdout (bypassing the harness capture) and then asserts.

mod common;

use std::io::Write;
use std::path::{Path, PathBuf};

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use vixtrade::config::RunConfig;
use vixtrade::discretization::{Coupling, GridSpec, SchemeOptions};
use vixtrade::futures::price_futures_surface;
use vixtrade::model::{GeneratorMatrix, MarketModel};
use vixtrade::output;
use vixtrade::simulator::{
    execute_strategy, run_ensemble, simulate_cir, simulate_regimes, summarize_pnl, Action, RegimePath, Strategy,
};
use vixtrade::stopping::{
    solve_all, solve_vi, ObstacleProblem, Sense, Solution, SolverConfig, ENTRY_LONG, ENTRY_SHORT,
};
use vixtrade::surface::Surface;

fn report(n: usize, pass: bool, detail: impl AsRef<str>) {
    let line = format!(
        "criterion {n}: {} - {}\n",
        if pass { "PASS" } else { "FAIL" },
        detail.as_ref()
    );
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    assert!(pass, "criterion {n}: {}", detail.as_ref());
}

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn load(name: &str) -> RunConfig {
    RunConfig::load(&config_path(name)).unwrap()
}

fn run(cfg: &RunConfig) -> (MarketModel, GridSpec, Solution) {
    let model = cfg.market_model().unwrap();
    let grid = cfg.trading_grid().unwrap();
    let sol = solve_all(&model, &grid, &cfg.solver, SchemeOptions::default()).unwrap();
    (model, grid, sol)
}

fn closed_form(s: f64, tau: f64, mu: f64, theta: f64) -> f64 {
    theta + (s - theta) * (-mu * tau).exp()
}

#[test]
fn criterion_01_single_regime_closed_form() {
    let max_rel = |n: usize, mu: f64, theta: f64| {
        let mut p = low_regime();
        p.mu_q = mu;
        p.theta_q = theta;
        let model = single(p, 0.0);
        let grid = GridSpec::new(n, n, 121.08, MATURITY).unwrap();
        let f = price_futures_surface(&model, &grid, SchemeOptions::default()).unwrap();
        let mut worst = 0.0_f64;
        for k in 0..n {
            let tau = MATURITY - grid.t(k);
            for m in 0..=n {
                let s = grid.s(m);
                if s >= 0.2 * theta && s <= 2.0 * theta {
                    let exact = closed_form(s, tau, mu, theta);
                    worst = worst.max((f.get(0, k, m) - exact).abs() / exact);
                }
            }
        }
        worst
    };
    let mut pass = true;
    let mut detail = Vec::new();
    for (mu, theta) in [(4.55, 18.16), (4.59, 40.36)] {
        let (coarse, fine) = (max_rel(200, mu, theta), max_rel(400, mu, theta));
        let shrink = coarse / fine;
        pass &= coarse < 5e-3 && shrink >= 3.0;
        detail.push(format!(
            "theta_q {theta}: max rel err {coarse:.2e} (M=N=200), {fine:.2e} (400), shrink {shrink:.2}"
        ));
    }
    report(1, pass, detail.join("; "));
}

#[test]
fn criterion_02_figure1_term_structure_shape() {
    let cfg = load("figure1.toml");
    let model = cfg.market_model().unwrap();
    let pricing = cfg.trading_grid().unwrap().with_horizon(model.maturity).unwrap();
    let f = price_futures_surface(&model, &pricing, SchemeOptions::default()).unwrap();
    // the price depends on time to maturity only, so the curve in maturity
    // is read backwards along t
    let curve = |i: usize| -> Vec<f64> {
        (0..=pricing.n_time)
            .rev()
            .map(|n| f.value_at(pricing.t(n), 30.0, i).unwrap())
            .collect()
    };
    let (lo, hi) = (curve(0), curve(1));
    let falls = lo.windows(2).filter(|w| w[1] < w[0]).count();
    let rises = hi.windows(2).filter(|w| w[1] > w[0]).count();
    let steps = pricing.n_time;
    report(
        2,
        falls == steps && rises == steps,
        format!(
            "regime 1 decreasing in maturity on {falls}/{steps} steps ({:.3} -> {:.3}), regime 2 increasing on {rises}/{steps} ({:.3} -> {:.3})",
            lo[0], lo[steps], hi[0], hi[steps]
        ),
    );
}

#[test]
fn criterion_03_discrete_complementarity() {
    let tol = 10.0 * 1e-8;
    let mut pass = true;
    let mut worst = (0.0_f64, String::new());
    for name in [
        "figure1.toml",
        "figure2_no_cost.toml",
        "figure2_cost.toml",
        "figure4.toml",
        "figure5.toml",
        "degenerate.toml",
    ] {
        let cfg = load(name);
        assert_eq!(cfg.solver.epsilon, 1e-8);
        let (_, _, sol) = run(&cfg);
        for vi in [&sol.v, &sol.j, &sol.u, &sol.k, &sol.p] {
            let r = vi.stats.max_residual();
            assert_eq!(vi.stats.residual.len(), vi.value.grid.time_nodes());
            pass &= r <= tol;
            if r >= worst.0 {
                worst = (r, format!("{} in {name}", vi.value.label));
            }
        }
    }
    report(
        3,
        pass,
        format!("30 VIs, worst residual {:.2e} ({}), bound {tol:.0e}", worst.0, worst.1),
    );
}

#[test]
fn criterion_04_martingale_degeneracy() {
    let cfg = load("degenerate.toml");
    let (model, grid, sol) = run(&cfg);
    assert_eq!((model.rate, model.cost_close, model.cost_open), (0.0, 0.0, 0.0));
    assert_eq!((grid.n_space, grid.n_time), (200, 200));
    let norms = [
        ("V-f", sol.v.value.max_abs_diff(&sol.futures)),
        ("U-f", sol.u.value.max_abs_diff(&sol.futures)),
        ("J", sol.j.value.max_abs()),
        ("K", sol.k.value.max_abs()),
        ("P", sol.p.value.max_abs()),
        ("L", sol.premium.max_abs()),
    ];
    let pass = norms.iter().all(|(_, v)| *v <= 1e-6);
    let detail: Vec<String> = norms.iter().map(|(l, v)| format!("{l} {v:.1e}")).collect();
    report(4, pass, format!("sup norms {}", detail.join(", ")));
}

#[test]
fn criterion_05_brute_force_lcp() {
    let grid = GridSpec::new(5, 3, 60.0, DEADLINE).unwrap();
    let cfg = SolverConfig {
        epsilon: 1e-13,
        ..SolverConfig::default()
    };
    let obstacles = |n_regimes: usize| {
        vec![
            (
                Surface::from_fn("call", grid, n_regimes, |i, n, m| {
                    grid.s(m) - 20.0 - 3.0 * i as f64 + n as f64
                }),
                Sense::Maximize,
            ),
            (
                Surface::from_fn("put", grid, n_regimes, |i, _, m| {
                    (25.0 + 5.0 * i as f64 - grid.s(m)).max(0.0)
                }),
                Sense::Maximize,
            ),
            (
                Surface::from_fn("cap", grid, n_regimes, |i, n, m| grid.s(m) + 0.5 + 0.1 * (i + n) as f64),
                Sense::Minimize,
            ),
            (
                Surface::from_fn("floor", grid, n_regimes, |i, _, m| {
                    (grid.s(m) - 30.0 - i as f64).min(0.0)
                }),
                Sense::Minimize,
            ),
        ]
    };
    let mut worst = 0.0_f64;
    let mut cases = 0;
    for model in [single(low_regime(), 0.0), two_regime(0.0)] {
        let options = SchemeOptions {
            coupling: Coupling::Iterated,
            ..SchemeOptions::default()
        };
        for (h, sense) in obstacles(model.n_regimes()) {
            let got = solve_vi(
                &ObstacleProblem::new(h.label.clone(), h.clone(), sense),
                &model,
                &cfg,
                options,
            )
            .unwrap()
            .value;
            worst = worst.max(got.max_abs_diff(&oracle_vi(&model, &h, sense, Coupling::Iterated)));
            cases += 1;
        }
    }
    report(
        5,
        worst <= 1e-9,
        format!("{cases} problems (6 nodes, 3 steps, both senses, 1 and 2 regimes), max deviation {worst:.1e}"),
    );
}

#[test]
fn criterion_06_cost_monotonicity_and_shutdown() {
    let at = |name: &str| {
        let mut cfg = load(name);
        cfg.grid.n_time = Some(1000);
        run(&cfg)
    };
    let (model, grid, free) = at("figure2_no_cost.toml");
    let (costly_model, _, costly) = at("figure2_cost.toml");
    assert_eq!(model.cost_close, 0.0);
    assert_eq!(costly_model.cost_close, 0.01);

    let mut violations = Vec::new();
    let mut compared = 0;
    for (label, lower) in [
        ("J", true),
        (ENTRY_LONG, true),
        ("V", false),
        ("K", false),
        (ENTRY_SHORT, false),
    ] {
        for i in 0..2 {
            for n in 0..grid.n_time {
                if let (Some(a), Some(b)) = (free.boundaries.level(label, i, n), costly.boundaries.level(label, i, n)) {
                    compared += 1;
                    if (lower && b > a) || (!lower && b < a) {
                        violations.push(format!("{label} regime {} node {n}", i + 1));
                    }
                }
            }
        }
    }

    let mut windows = Vec::new();
    let mut shutdown_ok = true;
    for label in ["J", "K", ENTRY_LONG, ENTRY_SHORT] {
        for i in 0..2 {
            let last = |sol: &Solution| {
                (0..grid.n_time)
                    .rev()
                    .find(|&n| sol.boundaries.level(label, i, n).is_some())
            };
            let persists = last(&free) == Some(grid.n_time - 1);
            let gap = last(&costly).map(|n| grid.n_time - 1 - n);
            shutdown_ok &= persists && gap.is_some_and(|g| g > 0);
            windows.push(format!(
                "{label}{}:{}",
                i + 1,
                gap.map_or("none".into(), |g| g.to_string())
            ));
        }
    }
    report(
        6,
        violations.is_empty() && shutdown_ok,
        format!(
            "N=1000: {compared} boundary pairs, {} ordering violations; zero-cost entry persists to the last node: {}; empty terminal window with costs (nodes) {}",
            violations.len(),
            shutdown_ok,
            windows.join(" ")
        ),
    );
}

#[test]
fn criterion_07_entry_dominance_and_split() {
    let (_, grid, sol) = run(&load("figure5.toml"));
    let (a, b) = (&sol.rewards.a, &sol.rewards.b);
    let slack = sol
        .p
        .value
        .values()
        .iter()
        .zip(a.values().iter().zip(b.values()))
        .map(|(p, (a, b))| p - a.max(*b))
        .fold(f64::INFINITY, f64::min);
    let mut split_ok = true;
    let mut detail = Vec::new();
    for i in 0..2 {
        let (p, a, b) = (sol.p.value.slice(i, 0), a.slice(i, 0), b.slice(i, 0));
        let touch = |r: &[f64]| -> Vec<usize> {
            (0..=grid.n_space)
                .filter(|&m| r[m] > 1e-7 && (p[m] - r[m]).abs() <= 1e-7 * (1.0 + r[m]))
                .collect()
        };
        let (on_a, on_b) = (touch(a), touch(b));
        let ok = !on_a.is_empty() && !on_b.is_empty() && on_a.iter().max() < on_b.iter().min();
        split_ok &= ok;
        detail.push(format!(
            "regime {}: P=A up to s={:.2}, P=B from s={:.2}",
            i + 1,
            on_a.iter().max().map_or(f64::NAN, |&m| grid.s(m)),
            on_b.iter().min().map_or(f64::NAN, |&m| grid.s(m)),
        ));
    }
    report(
        7,
        slack >= -1e-7 && split_ok,
        format!("min(P - max(A,B)) = {slack:.1e}; {}", detail.join("; ")),
    );
}

#[test]
fn criterion_08_region_orderings() {
    let at0 = |sol: &Solution, label: &str, i: usize| sol.boundaries.level(label, i, 0).unwrap_or(f64::NAN);
    let (_, _, four) = run(&load("figure4.toml"));
    let (_, _, five) = run(&load("figure5.toml"));
    let t1 = [
        at0(&four, ENTRY_LONG, 0),
        at0(&four, ENTRY_SHORT, 0),
        at0(&four, ENTRY_LONG, 1),
        at0(&four, ENTRY_SHORT, 1),
    ];
    let t2 = [
        at0(&five, ENTRY_LONG, 0),
        at0(&five, ENTRY_LONG, 1),
        at0(&five, ENTRY_SHORT, 0),
        at0(&five, ENTRY_SHORT, 1),
    ];
    let increasing = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]);
    let jk = [
        increasing(&[
            at0(&four, "J", 0),
            at0(&four, "K", 0),
            at0(&four, "J", 1),
            at0(&four, "K", 1),
        ]),
        increasing(&[
            at0(&five, "J", 0),
            at0(&five, "J", 1),
            at0(&five, "K", 0),
            at0(&five, "K", 1),
        ]),
    ];
    report(
        8,
        increasing(&t1) && increasing(&t2),
        format!(
            "figure 4: {:.2} < {:.2} < {:.2} < {:.2}; figure 5: {:.2} < {:.2} < {:.2} < {:.2}; same orderings for J/K: {:?}",
            t1[0], t1[1], t1[2], t1[3], t2[0], t2[1], t2[2], t2[3], jk
        ),
    );
}

#[test]
fn criterion_09_regime_symmetry() {
    let grid = GridSpec::new(200, 200, 121.08, DEADLINE).unwrap();
    let cfg = SolverConfig {
        epsilon: 1e-12,
        ..SolverConfig::default()
    };
    let mut twin = two_regime(0.01);
    twin.regimes[1] = twin.regimes[0];
    twin.gen_p = GeneratorMatrix::two_state(0.3, 1.7);
    twin.gen_q = GeneratorMatrix::two_state(0.7, 2.5);
    let solo = single(low_regime(), 0.01);
    let a = solve_all(&twin, &grid, &cfg, SchemeOptions::default()).unwrap();
    let b = solve_all(&solo, &grid, &cfg, SchemeOptions::default()).unwrap();
    let mut across = 0.0_f64;
    let mut vs_single = 0.0_f64;
    for ((label, s2), (_, s1)) in a.surfaces().iter().zip(b.surfaces().iter()) {
        for n in 0..=grid.n_time {
            let (r1, r2, one) = (s2.slice(0, n), s2.slice(1, n), s1.slice(0, n));
            for m in 0..=grid.n_space {
                across = across.max((r1[m] - r2[m]).abs());
                vs_single = vs_single.max((r1[m] - one[m]).abs()).max((r2[m] - one[m]).abs());
            }
        }
        assert!(!label.is_empty());
    }
    let f_gap = a
        .futures
        .max_abs_diff(&Surface::from_fn("", grid, 2, |_, n, m| b.futures.get(0, n, m)));
    report(
        9,
        across <= 1e-10 && vs_single <= 1e-10 && f_gap <= 1e-10,
        format!(
            "V J U K P A B L: max gap between regimes {across:.1e}, vs 1-regime solve {vs_single:.1e}; futures vs 1-regime {f_gap:.1e} (epsilon 1e-12)"
        ),
    );
}

#[test]
fn criterion_10_simulator_statistics() {
    // ensemble mean
    let model = single(low_regime(), 0.0);
    let p = low_regime();
    let (s0, horizon, n_paths) = (30.0, DEADLINE, 100_000);
    let dt = DEADLINE / 200.0;
    let regimes = RegimePath::constant(0, horizon).unwrap();
    let ends: Vec<f64> = (0..n_paths)
        .into_par_iter()
        .map(|k| {
            let seed = ChaCha8Rng::seed_from_u64(99).random::<u64>() ^ (k as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
            *simulate_cir(&model, &regimes, s0, dt, seed)
                .unwrap()
                .levels
                .last()
                .unwrap()
        })
        .collect();
    let n = n_paths as f64;
    let mean = ends.iter().sum::<f64>() / n;
    let se = (ends.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
    let exact = closed_form(s0, horizon, p.mu_p, p.theta_p);
    let mean_ok = (mean - exact).abs() <= 3.0 * se;

    // holding times: the first sojourn of a fresh path is exactly exponential,
    // later complete sojourns on a finite horizon are biased short
    let gen = GeneratorMatrix::two_state(0.1, 0.5);
    let mut sojourns = [Vec::new(), Vec::new()];
    for seed in 0..8000u64 {
        let i = (seed % 2) as usize;
        let path = simulate_regimes(&gen, i, 40.0 / gen.exit_rate(i), seed).unwrap();
        let (a, b, _) = path.segments().next().unwrap();
        assert!(!path.switch_times().is_empty());
        sojourns[i].push(b - a);
    }
    let mut hold_ok = true;
    let mut hold = Vec::new();
    for (i, xs) in sojourns.iter().enumerate() {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let se = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
        let want = 1.0 / gen.exit_rate(i);
        hold_ok &= (m - want).abs() <= 3.0 * se;
        hold.push(format!(
            "regime {}: {m:.3} vs {want} (se {se:.3}, {} sojourns)",
            i + 1,
            xs.len()
        ));
    }

    // byte-determinism of every output file, across thread counts
    let mut cfg = load("figure4.toml");
    cfg.simulation.n_paths = 300;
    let produce = |threads: usize| -> Vec<(String, Vec<u8>)> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let (model, _, sol) = run(&cfg);
            let spec = cfg.ensemble().unwrap();
            let runs = run_ensemble(&model, &sol.boundaries, &sol.futures, &spec).unwrap();
            let logs: Vec<_> = runs.iter().map(|r| r.log.clone()).collect();
            let summary = summarize_pnl(&logs, model.rate);
            let dir = tempfile::tempdir().unwrap();
            let d = dir.path();
            for (label, s) in sol.surfaces() {
                output::write_surface_file(&d.join(format!("{label}.csv")), s).unwrap();
            }
            output::write_boundaries(&d.join("boundaries.csv"), &sol.boundaries).unwrap();
            output::write_diagnostics(&d.join("diagnostics.csv"), &sol).unwrap();
            output::write_paths(&d.join("paths.csv"), &runs, 20).unwrap();
            output::write_trades(&d.join("trades.csv"), &runs).unwrap();
            output::write_summary(&d.join("summary.csv"), &runs).unwrap();
            output::write_ensemble(&d.join("ensemble.csv"), spec.seed, spec.strategy.as_str(), &summary).unwrap();
            let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(d)
                .unwrap()
                .map(|e| {
                    let e = e.unwrap();
                    (
                        e.file_name().to_string_lossy().into_owned(),
                        std::fs::read(e.path()).unwrap(),
                    )
                })
                .collect();
            files.sort();
            files
        })
    };
    let first = produce(4);
    let identical = first == produce(4) && first == produce(1);
    let trades = first
        .iter()
        .find(|(n, _)| n == "trades.csv")
        .map_or(0, |(_, b)| b.len());

    report(
        10,
        mean_ok && hold_ok && identical && trades > 0,
        format!(
            "mean at horizon {mean:.4} vs {exact:.4} (se {se:.4}, {n_paths} paths); holding {}; {} output files byte-identical across reruns and thread counts: {identical}",
            hold.join(", "),
            first.len()
        ),
    );
}

#[test]
fn criterion_11_scenario_mechanics() {
    let model = two_regime(0.01);
    let grid = GridSpec::new(200, 200, 121.08, DEADLINE).unwrap();
    let sol = solve_all(&model, &grid, &SolverConfig::default(), SchemeOptions::default()).unwrap();
    use Action::*;
    // (name, strategy, s0, switch time as a fraction of the horizon, seed, expected actions)
    type Scenario = (&'static str, Strategy, f64, f64, u64, &'static [Action]);
    let scenarios: [Scenario; 3] = [
        (
            "a",
            Strategy::LongShort,
            16.0,
            0.5,
            731,
            &[OpenLong, Close, OpenLong, Close],
        ),
        ("b", Strategy::Either, 16.0, 0.3, 78, &[OpenLong, Close]),
        (
            "c",
            Strategy::Either,
            21.0,
            0.3,
            51,
            &[OpenShort, ForcedSwitchClose, OpenLong, Close],
        ),
    ];
    let mut pass = true;
    let mut detail = Vec::new();
    for (name, strategy, s0, frac, seed, want) in scenarios {
        let switch = frac * DEADLINE;
        let regimes = RegimePath::new(vec![0.0, switch], vec![0, 1], DEADLINE).unwrap();
        let path = simulate_cir(&model, &regimes, s0, grid.dt(), seed).unwrap();
        let log = execute_strategy(&path, &sol.boundaries, &sol.futures, strategy, &model).unwrap();
        let got: Vec<Action> = log.events.iter().map(|e| e.action).collect();
        let switch_node = (0..path.len()).find(|&k| path.switches_at(k)).unwrap();
        let structural = match name {
            // waits first, then trades
            "b" => log.events[0].node > 0,
            // the forced close and the new long share the switch node
            "c" => log.events[1].node == switch_node && log.events[2].node == switch_node,
            _ => log.events.iter().all(|e| e.node < path.len() - 1),
        };
        let ok = got == want && structural && log.is_well_formed();
        pass &= ok;
        let seq: Vec<String> = log
            .events
            .iter()
            .map(|e| format!("{}@{}", e.action.as_str(), e.node))
            .collect();
        detail.push(format!("({name}) {} [switch node {switch_node}]", seq.join(" ")));
    }
    report(11, pass, detail.join("; "));
}

#[test]
fn criterion_12_truncation_insensitivity() {
    let cfg = load("figure4.toml");
    let (model, grid, base) = run(&cfg);
    let wide_grid = GridSpec::new(2 * grid.n_space, grid.n_time, 2.0 * grid.s_max, grid.t_end).unwrap();
    let wide = solve_all(&model, &wide_grid, &cfg.solver, SchemeOptions::default()).unwrap();
    let probe_top = 1.5 * model.max_theta();
    let mut gaps = Vec::new();
    let mut worst = 0.0_f64;
    for (label, a, b) in [
        ("f", &base.futures, &wide.futures),
        ("V", &base.v.value, &wide.v.value),
        ("U", &base.u.value, &wide.u.value),
    ] {
        let mut gap = 0.0_f64;
        for i in 0..2 {
            for n in 0..=grid.n_time {
                for m in (0..=grid.n_space).filter(|&m| grid.s(m) <= probe_top) {
                    gap = gap.max((a.get(i, n, m) - b.get(i, n, m)).abs());
                }
            }
        }
        worst = worst.max(gap);
        gaps.push(format!("{label} {gap:.1e}"));
    }
    report(
        12,
        worst < 1e-4,
        format!(
            "s_max {} -> {}, max change at s <= {probe_top:.2}: {}",
            grid.s_max,
            wide_grid.s_max,
            gaps.join(", ")
        ),
    );
}
