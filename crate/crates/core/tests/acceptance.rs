//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits nonzero if any criterion fails.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use beamsculpt::harness::{run_once, run_sweep, SweepOutcome, SweepSpec, REFERENCE_GAMMAS};
use beamsculpt::metrics::MetricsOptions;
use beamsculpt::model::{generate_channel, generate_reliability};
use beamsculpt::oracle::{grad_check, prox_check, random_instance, single_user_optimum};
use beamsculpt::prox::soft_threshold;
use beamsculpt::solver::fixed_point_residual;
use beamsculpt::{
    solve, PenaltyParams, ReliabilityMatrix, ReliabilityScheme, SolverParams, SystemConfig,
};
use num_complex::Complex64;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    ensure(
        elapsed.as_secs_f64() < limit_s,
        format!("took {:.2}s, limit {limit_s}s", elapsed.as_secs_f64()),
    )
}

/// Full 64x4 sweep shared by criteria 4, 5, 6 and 8.
fn reference_sweep(dir: &Path) -> Result<SweepOutcome, String> {
    let mut spec = SweepSpec::new(SystemConfig::reference_default(), dir);
    spec.gamma_values = REFERENCE_GAMMAS.to_vec();
    spec.n_runs = 10;
    run_sweep(&spec).map_err(|e| e.to_string())
}

fn c1_gradient_oracle() -> Check {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let (w, h, config, duals) = random_instance(seed, 8, 3).map_err(|e| e.to_string())?;
        let report = grad_check(&w, &h, &config, &duals, 1e-6).map_err(|e| e.to_string())?;
        worst = worst.max(report.max_rel_error);
    }
    ensure(worst < 1e-5, format!("max relative error {worst:e} >= 1e-5"))?;
    within(start.elapsed(), 5.0)?;
    Ok(format!("20 instances, max rel error {worst:.3e} < 1e-5"))
}

fn c2_prox_oracle() -> Check {
    let start = Instant::now();
    let report = prox_check(1000, 2024);
    ensure(
        report.max_deviation < 5e-4,
        format!("max deviation {:e}", report.max_deviation),
    )?;
    ensure(report.kappa_zero_exact, "kappa = 0 is not the identity")?;
    let cases = [(1.0, 0.4, 0.6), (0.3, 0.5, 0.0), (-1.0, 0.4, -0.6)];
    for (x, kappa, expected) in cases {
        let z = soft_threshold(Complex64::new(x, 0.0), kappa);
        ensure(
            z == Complex64::new(expected, 0.0),
            format!("S_{kappa}({x}) = {z}, expected {expected}"),
        )?;
    }
    within(start.elapsed(), 5.0)?;
    Ok(format!(
        "1000 samples, max deviation {:.3e} < 5e-4; real branches exact",
        report.max_deviation
    ))
}

fn c3_single_user() -> Check {
    let start = Instant::now();
    let mut config = SystemConfig::with_dims(4, 1);
    config.power_budget = 1.0;
    config.noise_variance = 1.0;
    config.min_rate_bps = vec![0.0];
    let params = SolverParams::default();
    let mut worst: f64 = 0.0;
    for seed in 0..5 {
        let h = generate_channel(&config, seed);
        let beta = ReliabilityMatrix::uniform(4, 1, 0.5).map_err(|e| e.to_string())?;
        let penalty = PenaltyParams::new(0.0, &beta).map_err(|e| e.to_string())?;
        let result = solve(&h, &penalty, &config, &params, seed).map_err(|e| e.to_string())?;
        ensure(result.iterations <= 3000, "more than 3000 iterations")?;
        let (_, optimum) = single_user_optimum(h.column(0), 1.0, 1.0).map_err(|e| e.to_string())?;
        let rate = result.trace.records.last().unwrap().rates_nats[0];
        let gap = (rate - optimum).abs() / optimum;
        worst = worst.max(gap);
        ensure(gap < 0.01, format!("seed {seed}: rate {rate} vs optimum {optimum}"))?;
    }
    within(start.elapsed(), 10.0)?;
    Ok(format!("5 seeds, worst relative gap {worst:.3e} < 1%"))
}

fn c4_trends(outcome: &SweepOutcome, budget: f64) -> Check {
    let rows = &outcome.summary;
    ensure(rows.len() == 5, "expected 5 summary rows")?;
    let stats: Vec<_> = rows
        .iter()
        .map(|r| r.stats.clone().ok_or(format!("gamma {} has no runs", r.gamma)))
        .collect::<Result<_, _>>()?;
    for k in 1..stats.len() {
        let (prev, cur) = (&stats[k - 1], &stats[k]);
        ensure(
            cur.se_bps_hz.mean <= prev.se_bps_hz.mean * 1.02,
            format!("(a) SE rises at gamma {}", rows[k].gamma),
        )?;
        ensure(
            cur.bmd_percent.mean <= prev.bmd_percent.mean,
            format!("(b) BMD rises at gamma {}", rows[k].gamma),
        )?;
        ensure(
            cur.rl_percent.mean >= prev.rl_percent.mean,
            format!("(c) RL falls at gamma {}", rows[k].gamma),
        )?;
    }
    ensure(stats[0].bmd_percent.mean == 100.0, "(b) BMD(0) != 100")?;
    ensure(stats[0].bmd_percent.std == 0.0, "(b) BMD(0) spread != 0")?;
    ensure(stats[0].rl_percent.mean == 0.0, "(c) RL(0) != 0")?;
    let mut max_power: f64 = 0.0;
    for run in &outcome.runs {
        let s = run.outcome.as_ref().map_err(|e| format!("run failed: {e}"))?;
        max_power = max_power.max(s.metrics.pw_watts);
    }
    ensure(
        max_power <= budget * (1.0 + 1e-3),
        format!("(d) final power {max_power} exceeds budget"),
    )?;
    let se: Vec<String> = stats.iter().map(|s| format!("{:.3}", s.se_bps_hz.mean)).collect();
    let bmd: Vec<String> = stats.iter().map(|s| format!("{:.1}", s.bmd_percent.mean)).collect();
    let rl: Vec<String> = stats.iter().map(|s| format!("{:.1}", s.rl_percent.mean)).collect();
    Ok(format!(
        "SE [{}] BMD [{}] RL [{}] max PW {max_power:.3} W",
        se.join(", "),
        bmd.join(", "),
        rl.join(", ")
    ))
}

fn c5_rate_identity(outcome: &SweepOutcome, dir: &Path, config: &SystemConfig) -> Check {
    let bw = config.bandwidth_hz / config.n_users as f64;
    let mut checked = 0;
    for run in &outcome.runs {
        let m = &run.outcome.as_ref().map_err(|e| e.clone())?.metrics;
        ensure(m.ri_avg_bps == m.se_bps_hz * bw, "run report breaks Ri = SE * B/M")?;
        checked += 1;
    }
    for row in &outcome.summary {
        let s = row.stats.as_ref().ok_or("missing stats")?;
        ensure(s.ri_avg_bps.mean == s.se_bps_hz.mean * bw, "summary breaks Ri = SE * B/M")?;
        checked += 1;
    }
    // The emitted CSV carries the same identity after a text round trip.
    let text = fs::read_to_string(dir.join("summary.csv")).map_err(|e| e.to_string())?;
    for line in text.lines().skip(1) {
        let f: Vec<f64> = line.split(',').take(3).map(|v| v.parse().unwrap()).collect();
        ensure(f[2] == f[1] * bw, "summary.csv breaks Ri = SE * B/M")?;
        checked += 1;
    }
    let table: f64 = 2.3238 * 0.75e9 / 1e9;
    ensure((table - 1.7429).abs() < 5e-5, "table row inconsistent")?;
    Ok(format!("{checked} reports exact; 2.3238 x 0.75 GHz = {table:.4} Gbps"))
}

fn c6_dual_feasibility(outcome: &SweepOutcome, extra_min: f64) -> Check {
    let mut min_seen = extra_min;
    for run in &outcome.runs {
        let s = run.outcome.as_ref().map_err(|e| e.clone())?;
        min_seen = min_seen.min(s.min_dual);
    }
    ensure(min_seen >= 0.0, format!("negative multiplier {min_seen}"))?;
    Ok(format!("{} sweep runs plus extra runs, min multiplier {min_seen}", outcome.runs.len()))
}

fn sweep_cli(out: &Path, sequential: bool) -> Result<(), String> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_beamsculpt"));
    cmd.args(["sweep", "--gammas", "0,3.334,33.34,166.7,333.4", "--runs", "10", "--out"])
        .arg(out);
    if sequential {
        cmd.arg("--sequential");
    }
    let status = cmd.output().map_err(|e| e.to_string())?;
    ensure(status.status.success(), format!("sweep exited with {}", status.status))
}

fn c7_determinism(dir: &Path) -> Check {
    let (a, b, s) = (dir.join("a"), dir.join("b"), dir.join("seq"));
    sweep_cli(&a, false)?;
    sweep_cli(&b, false)?;
    sweep_cli(&s, true)?;
    for name in ["summary.csv", "runs.csv"] {
        let first = fs::read(a.join(name)).map_err(|e| e.to_string())?;
        ensure(first == fs::read(b.join(name)).unwrap(), format!("{name} differs between reruns"))?;
        ensure(first == fs::read(s.join(name)).unwrap(), format!("{name} differs sequential vs parallel"))?;
    }
    Ok("summary.csv and runs.csv byte-identical across reruns and exec modes".into())
}

/// Convergence contract over the sweep plus runs that do converge.
fn c8_convergence(outcome: &SweepOutcome) -> Check {
    let tol = 1e-12;
    let mut converged = 0;
    let mut check = |change: f64, residual: f64, what: &str| -> Result<(), String> {
        converged += 1;
        ensure(change < tol, format!("{what}: primal change {change}"))?;
        ensure(residual < 1e-11, format!("{what}: fixed-point residual {residual}"))
    };
    for run in &outcome.runs {
        let s = run.outcome.as_ref().map_err(|e| e.clone())?;
        if s.converged {
            check(s.final_primal_change, s.fixed_point_residual, "sweep run")?;
        }
    }
    // Fully failed arrays under a heavy penalty collapse to the stationary W = 0.
    let config = SystemConfig::with_dims(8, 2);
    let beta = ReliabilityMatrix::uniform(8, 2, 0.0).unwrap();
    let penalty = PenaltyParams::new(1e4, &beta).unwrap();
    let params = SolverParams::default();
    for seed in 0..3 {
        let h = generate_channel(&config, seed);
        let r = solve(&h, &penalty, &config, &params, seed).map_err(|e| e.to_string())?;
        ensure(r.converged, "collapsed run did not converge")?;
        let residual =
            fixed_point_residual(&r.w_final, &r.duals_last_step, r.eta_last_step, &h, &penalty, &config)
                .map_err(|e| e.to_string())?;
        check(r.final_primal_change(), residual, "collapsed run")?;
    }
    Ok(format!("{converged} converged runs satisfy change < 1e-12 and residual < 1e-11"))
}

fn c9_sparsity_mechanics() -> Check {
    let config = SystemConfig::reference_default();
    let params = SolverParams::default();
    let metrics = MetricsOptions::default();

    let ones = ReliabilityMatrix::uniform(64, 4, 1.0).unwrap();
    for seed in 0..3 {
        let h = generate_channel(&config, seed);
        let free = solve(&h, &PenaltyParams::new(0.0, &ones).unwrap(), &config, &params, seed)
            .map_err(|e| e.to_string())?;
        let heavy = solve(&h, &PenaltyParams::new(333.4, &ones).unwrap(), &config, &params, seed)
            .map_err(|e| e.to_string())?;
        ensure(free == heavy, format!("seed {seed}: healthy-array trajectories differ"))?;
    }

    let failed_antenna = 5;
    let mut min_dual: f64 = f64::INFINITY;
    let mut tally = Vec::new();
    for (label, healthy_rest) in [("random others", false), ("healthy others", true)] {
        let mut zero_rows = 0;
        for run in 0..10u64 {
            let mut beta = generate_reliability(&config, run, &ReliabilityScheme::PerAntennaUniform)
                .unwrap()
                .into_inner();
            if healthy_rest {
                beta.fill(1.0);
            }
            beta.row_mut(failed_antenna).fill(0.0);
            let beta = ReliabilityMatrix::new(beta).unwrap();
            let (result, summary) = run_once(&config, &beta, 333.4, &params, &metrics, run)
                .map_err(|e| e.to_string())?;
            min_dual = min_dual.min(summary.min_dual);
            if result.w_final.row(failed_antenna).iter().all(|z| z.norm() == 0.0) {
                zero_rows += 1;
            }
        }
        ensure(zero_rows >= 9, format!("{label}: failed row zero in only {zero_rows}/10 runs"))?;
        tally.push(format!("{label} {zero_rows}/10"));
    }
    ensure(min_dual >= 0.0, "negative multiplier in sparsity runs")?;
    Ok(format!("healthy array identical over 3 seeds; failed row zeroed: {}", tally.join(", ")))
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let mut results: Vec<(&str, Check)> = Vec::new();

    results.push(("1 gradient oracle", c1_gradient_oracle()));
    results.push(("2 prox oracle", c2_prox_oracle()));
    results.push(("3 single-user optimum", c3_single_user()));

    let config = SystemConfig::reference_default();
    let start = Instant::now();
    let sweep = reference_sweep(&dir.path().join("full"));
    let sweep_time = start.elapsed();
    match &sweep {
        Ok(outcome) => {
            let trend = c4_trends(outcome, config.power_budget)
                .and_then(|msg| within(sweep_time, 900.0).map(|_| msg))
                .map(|msg| format!("{msg} ({:.1}s)", sweep_time.as_secs_f64()));
            results.push(("4 trade-off trends", trend));
            results.push(("5 rate identity", c5_rate_identity(outcome, &dir.path().join("full"), &config)));
            let nine = c9_sparsity_mechanics();
            results.push(("6 dual feasibility", c6_dual_feasibility(outcome, 0.0)));
            results.push(("7 determinism", c7_determinism(dir.path())));
            results.push(("8 convergence contract", c8_convergence(outcome)));
            results.push(("9 sparsity mechanics", nine));
        }
        Err(e) => {
            for name in ["4 trade-off trends", "5 rate identity", "6 dual feasibility", "8 convergence contract"] {
                results.push((name, Err(format!("sweep failed: {e}"))));
            }
            results.push(("7 determinism", c7_determinism(dir.path())));
            results.push(("9 sparsity mechanics", c9_sparsity_mechanics()));
        }
    }

    let mut failed = 0;
    for (name, result) in &results {
        match result {
            Ok(msg) => println!("PASS criterion {name}: {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {name}: {msg}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
