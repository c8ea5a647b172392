//! Seeded multi-run sweeps over the sparsity weight and the files they emit.
//!
//! For run `r` the channel and the initial beamformer are drawn from seed
//! `base_seed + r` for every sparsity weight, so each weight sees the same
//! channels. The reliability matrix is drawn once from `base_seed` unless
//! `redraw_reliability` is set, in which case run `r` uses `base_seed + r`.
//!
//! Output layout under `output_dir`:
//!
//! ```text
//! summary.csv            one row per sparsity weight
//! runs.csv               one row per (weight, run)
//! trace_g{γ}_r{r}.csv    per-iteration solver trace
//! pattern_g{γ}_r{r}.csv  0/1 occupancy of the final beamformer
//! reliability.csv        reliability matrix used by run 0
//! meta.json              sweep echo, version and metric definitions
//! ```
//!
//! Floats are written in shortest round-trip form, so reruns diff cleanly.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::{
    aggregate, evaluate, support_mask, AggregateReport, MetricsOptions, MetricsReport,
    BMD_DEFINITION, PW_DEFINITION, RL_DEFINITION,
};
use crate::model::{
    generate_channel, generate_reliability, BeamformingMatrix, ReliabilityMatrix,
    ReliabilityScheme, SystemConfig,
};
use crate::par::{map_ordered, ExecMode};
use crate::prox::PenaltyParams;
use crate::solver::{fixed_point_residual, solve, IterateTrace, SolveResult, SolverParams};

/// Sparsity weights of the reference trade-off study.
pub const REFERENCE_GAMMAS: [f64; 5] = [0.0, 3.334, 33.34, 166.7, 333.4];

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub gamma_values: Vec<f64>,
    pub n_runs: usize,
    pub base_seed: u64,
    pub config: SystemConfig,
    pub reliability: ReliabilityScheme,
    pub redraw_reliability: bool,
    pub solver: SolverParams,
    pub metrics: MetricsOptions,
    pub output_dir: PathBuf,
    pub exec: ExecMode,
}

impl SweepSpec {
    pub fn new(config: SystemConfig, output_dir: impl Into<PathBuf>) -> Self {
        SweepSpec {
            gamma_values: REFERENCE_GAMMAS.to_vec(),
            n_runs: 10,
            base_seed: 0,
            config,
            reliability: ReliabilityScheme::PerAntennaUniform,
            redraw_reliability: false,
            solver: SolverParams::default(),
            metrics: MetricsOptions::default(),
            output_dir: output_dir.into(),
            exec: ExecMode::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        self.solver.validate()?;
        if self.gamma_values.is_empty() {
            return Err(Error::invalid("gammas", "at least one value is required"));
        }
        if let Some(bad) = self
            .gamma_values
            .iter()
            .find(|g| !(g.is_finite() && **g >= 0.0))
        {
            return Err(Error::invalid("gammas", format!("{bad} is not a nonnegative number")));
        }
        if self.n_runs == 0 {
            return Err(Error::invalid("runs", "must be at least 1"));
        }
        Ok(())
    }

    /// Sorted, de-duplicated sparsity weights.
    pub fn sorted_gammas(&self) -> Vec<f64> {
        let mut g = self.gamma_values.clone();
        g.sort_by(f64::total_cmp);
        g.dedup();
        g
    }

    fn reliability_seed(&self, run: usize) -> u64 {
        if self.redraw_reliability {
            self.channel_seed(run)
        } else {
            self.base_seed
        }
    }

    fn channel_seed(&self, run: usize) -> u64 {
        self.base_seed.wrapping_add(run as u64)
    }
}

/// Convergence facts of one finished run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub metrics: MetricsReport,
    pub converged: bool,
    pub iterations: usize,
    pub final_primal_change: f64,
    /// `‖W − prox(W + ηG, η)‖_F` at the final iterate.
    pub fixed_point_residual: f64,
    /// Smallest multiplier seen over the whole trace.
    pub min_dual: f64,
    pub exhausted_line_searches: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub gamma: f64,
    pub run: usize,
    pub channel_seed: u64,
    pub reliability_seed: u64,
    pub outcome: std::result::Result<RunSummary, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub gamma: f64,
    pub n_ok: usize,
    pub n_failed: usize,
    /// `None` when every run at this weight failed.
    pub stats: Option<AggregateReport>,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub summary: Vec<SummaryRow>,
    pub runs: Vec<RunRecord>,
}

impl SweepOutcome {
    /// True when at least one run succeeded at every weight.
    pub fn every_gamma_has_result(&self) -> bool {
        self.summary.iter().all(|r| r.n_ok > 0)
    }
}

/// Solves one run and derives its summary.
pub fn run_once(
    config: &SystemConfig,
    beta: &ReliabilityMatrix,
    gamma: f64,
    solver: &SolverParams,
    metrics: &MetricsOptions,
    seed: u64,
) -> Result<(SolveResult, RunSummary)> {
    let h = generate_channel(config, seed);
    let penalty = PenaltyParams::new(gamma, beta)?;
    let result = solve(&h, &penalty, config, solver, seed)?;
    let report = evaluate(&result.w_final, &h, beta, config, metrics)?;
    let residual = fixed_point_residual(
        &result.w_final,
        &result.duals_last_step,
        result.eta_last_step,
        &h,
        &penalty,
        config,
    )?;
    let min_dual = result
        .trace
        .records
        .iter()
        .map(|r| r.duals.min_value())
        .fold(f64::INFINITY, f64::min);
    let summary = RunSummary {
        metrics: report,
        converged: result.converged,
        iterations: result.iterations,
        final_primal_change: result.final_primal_change(),
        fixed_point_residual: residual,
        min_dual,
        exhausted_line_searches: result
            .trace
            .records
            .iter()
            .filter(|r| r.line_search_exhausted)
            .count(),
    };
    Ok((result, summary))
}

pub fn run_sweep(spec: &SweepSpec) -> Result<SweepOutcome> {
    spec.validate()?;
    let out = &spec.output_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let gammas = spec.sorted_gammas();
    let base_beta = generate_reliability(&spec.config, spec.reliability_seed(0), &spec.reliability)?;
    emit_reliability_heatmap(&base_beta, &out.join("reliability.csv"))?;
    let betas: Vec<ReliabilityMatrix> = if spec.redraw_reliability {
        (0..spec.n_runs)
            .map(|r| generate_reliability(&spec.config, spec.reliability_seed(r), &spec.reliability))
            .collect::<Result<_>>()?
    } else {
        vec![base_beta]
    };

    let jobs: Vec<(f64, usize)> = gammas
        .iter()
        .flat_map(|g| (0..spec.n_runs).map(move |r| (*g, r)))
        .collect();

    let results = map_ordered(&jobs, spec.exec, |&(gamma, run)| -> Result<RunRecord> {
        let beta = &betas[if spec.redraw_reliability { run } else { 0 }];
        let seed = spec.channel_seed(run);
        let outcome = match run_once(&spec.config, beta, gamma, &spec.solver, &spec.metrics, seed) {
            Ok((result, summary)) => {
                let tag = format!("g{gamma}_r{run}");
                emit_convergence_trace(&result.trace, &out.join(format!("trace_{tag}.csv")))?;
                emit_sparsity_pattern(
                    &result.w_final,
                    spec.metrics.zero_tol,
                    &out.join(format!("pattern_{tag}.csv")),
                )?;
                Ok(summary)
            }
            Err(e @ (Error::Io { .. } | Error::Csv { .. })) => return Err(e),
            Err(e) => Err(e.to_string()),
        };
        Ok(RunRecord {
            gamma,
            run,
            channel_seed: seed,
            reliability_seed: spec.reliability_seed(run),
            outcome,
        })
    });
    let runs = results.into_iter().collect::<Result<Vec<_>>>()?;

    let bw = spec.config.per_user_bandwidth();
    let summary = gammas
        .iter()
        .map(|&gamma| {
            let ok: Vec<MetricsReport> = runs
                .iter()
                .filter(|r| r.gamma == gamma)
                .filter_map(|r| r.outcome.as_ref().ok().map(|s| s.metrics.clone()))
                .collect();
            SummaryRow {
                gamma,
                n_ok: ok.len(),
                n_failed: spec.n_runs - ok.len(),
                stats: aggregate(&ok, bw).ok(),
            }
        })
        .collect::<Vec<_>>();

    write_summary_csv(&summary, &out.join("summary.csv"))?;
    write_runs_csv(&runs, &out.join("runs.csv"))?;
    write_meta(spec, &out.join("meta.json"))?;
    Ok(SweepOutcome { summary, runs })
}

fn num(x: f64) -> String {
    x.to_string()
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))
}

fn write_rows<I, R>(path: &Path, rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut writer = csv_writer(path)?;
    for row in rows {
        writer.write_record(row).map_err(|e| Error::csv(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

pub const SUMMARY_COLUMNS: [&str; 13] = [
    "gamma", "se_mean", "ri_mean", "rl_mean", "bmd_mean", "bmd_std", "pw_mean", "pw_std",
    "se_std", "ri_std", "rl_std", "n_ok", "n_failed",
];

fn summary_fields(row: &SummaryRow) -> Vec<String> {
    let mut fields = vec![num(row.gamma)];
    match &row.stats {
        Some(s) => fields.extend(
            [
                s.se_bps_hz.mean,
                s.ri_avg_bps.mean,
                s.rl_percent.mean,
                s.bmd_percent.mean,
                s.bmd_percent.std,
                s.pw_watts.mean,
                s.pw_watts.std,
                s.se_bps_hz.std,
                s.ri_avg_bps.std,
                s.rl_percent.std,
            ]
            .map(num),
        ),
        None => fields.extend(std::iter::repeat_n(String::from("NaN"), 10)),
    }
    fields.push(row.n_ok.to_string());
    fields.push(row.n_failed.to_string());
    fields
}

pub fn write_summary_csv(rows: &[SummaryRow], path: &Path) -> Result<()> {
    let header = SUMMARY_COLUMNS.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    write_rows(path, std::iter::once(header).chain(rows.iter().map(summary_fields)))
}

/// Aligned plain-text rendering of the summary, same columns as the CSV.
pub fn format_summary_table(rows: &[SummaryRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>10} {:>10} {:>12} {:>9} {:>9} {:>8} {:>10} {:>9} {:>5}",
        "gamma", "SE", "Ri (Gbps)", "RL %", "BMD %", "BMD std", "PW (W)", "PW std", "ok"
    );
    for row in rows {
        match &row.stats {
            Some(s) => {
                let _ = writeln!(
                    out,
                    "{:>10.4} {:>10.4} {:>12.4} {:>9.4} {:>9.4} {:>8.4} {:>10.2} {:>9.2} {:>5}",
                    row.gamma,
                    s.se_bps_hz.mean,
                    s.ri_avg_bps.mean / 1e9,
                    s.rl_percent.mean,
                    s.bmd_percent.mean,
                    s.bmd_percent.std,
                    s.pw_watts.mean,
                    s.pw_watts.std,
                    row.n_ok
                );
            }
            None => {
                let _ = writeln!(out, "{:>10.4} {:>10} (all runs failed)", row.gamma, "-");
            }
        }
    }
    out
}

pub fn write_runs_csv(runs: &[RunRecord], path: &Path) -> Result<()> {
    let header = [
        "gamma", "run", "channel_seed", "reliability_seed", "status", "converged",
        "iterations", "se_bps_hz", "ri_avg_bps", "rl_percent", "bmd_percent", "pw_watts",
        "final_primal_change", "fixed_point_residual", "min_dual", "error",
    ]
    .map(String::from)
    .to_vec();
    let rows = runs.iter().map(|r| {
        let mut f = vec![
            num(r.gamma),
            r.run.to_string(),
            r.channel_seed.to_string(),
            r.reliability_seed.to_string(),
        ];
        match &r.outcome {
            Ok(s) => {
                f.push("ok".into());
                f.push(s.converged.to_string());
                f.push(s.iterations.to_string());
                f.extend(
                    [
                        s.metrics.se_bps_hz,
                        s.metrics.ri_avg_bps,
                        s.metrics.rl_percent,
                        s.metrics.bmd_percent,
                        s.metrics.pw_watts,
                        s.final_primal_change,
                        s.fixed_point_residual,
                        s.min_dual,
                    ]
                    .map(num),
                );
                f.push(String::new());
            }
            Err(msg) => {
                f.push("failed".into());
                f.extend(std::iter::repeat_n(String::new(), 10));
                f.push(msg.clone());
            }
        }
        f
    });
    write_rows(path, std::iter::once(header).chain(rows))
}

/// 0/1 occupancy, `n_tx` rows by `n_users` columns, no header.
pub fn emit_sparsity_pattern(w: &BeamformingMatrix, zero_tol: f64, path: &Path) -> Result<()> {
    let mask = support_mask(w, zero_tol);
    write_rows(
        path,
        mask.rows()
            .into_iter()
            .map(|row| row.iter().map(|b| if *b { "1" } else { "0" }).collect::<Vec<_>>()),
    )
}

/// Reliability matrix as a headerless CSV; readable by
/// [`crate::model::read_reliability_csv`].
pub fn emit_reliability_heatmap(beta: &ReliabilityMatrix, path: &Path) -> Result<()> {
    write_rows(
        path,
        beta.rows()
            .into_iter()
            .map(|row| row.iter().map(|b| num(*b)).collect::<Vec<_>>()),
    )
}

pub fn emit_convergence_trace(trace: &IterateTrace, path: &Path) -> Result<()> {
    let n_users = trace.records.first().map_or(0, |r| r.rates_nats.len());
    let mut header: Vec<String> = [
        "iter", "objective", "se_bps_hz", "power", "eta", "backtracks", "primal_change",
    ]
    .map(String::from)
    .to_vec();
    header.extend((0..n_users).map(|j| format!("lambda1_{j}")));
    header.extend((0..n_users).map(|j| format!("lambda2_{j}")));
    header.push("mu".into());

    let rows = trace.records.iter().map(|r| {
        let mut f = vec![
            r.iter.to_string(),
            num(r.objective),
            num(r.se_bps_hz),
            num(r.power),
            num(r.eta),
            r.backtracks.to_string(),
            num(r.primal_change),
        ];
        f.extend(r.duals.lambda1.iter().map(|v| num(*v)));
        f.extend(r.duals.lambda2.iter().map(|v| num(*v)));
        f.push(num(r.duals.mu));
        f
    });
    write_rows(path, std::iter::once(header).chain(rows))
}

#[derive(Serialize)]
struct Meta<'a> {
    artifact: &'static str,
    version: &'static str,
    gamma_values: Vec<f64>,
    n_runs: usize,
    base_seed: u64,
    config: &'a SystemConfig,
    reliability_scheme: String,
    redraw_reliability: bool,
    solver: &'a SolverParams,
    metrics: &'a MetricsOptions,
    definitions: serde_json::Value,
}

#[derive(Serialize)]
struct Definitions {
    rl_percent: &'static str,
    bmd_percent: &'static str,
    pw_watts: &'static str,
    se_bps_hz: &'static str,
    ri_avg_bps: &'static str,
    seeds: &'static str,
}

pub(crate) fn definitions() -> serde_json::Value {
    serde_json::to_value(Definitions {
        rl_percent: RL_DEFINITION,
        bmd_percent: BMD_DEFINITION,
        pw_watts: PW_DEFINITION,
        se_bps_hz: "mean over users of log2(1 + SINR)",
        ri_avg_bps: "se_bps_hz * bandwidth_hz / n_users",
        seeds: "run r uses channel/init seed base_seed + r for every gamma; reliability seed base_seed (or base_seed + r with redraw)",
    })
    .expect("static definitions serialize")
}

pub(crate) fn scheme_label(scheme: &ReliabilityScheme) -> String {
    match scheme {
        ReliabilityScheme::PerAntennaUniform => "per_antenna_uniform".into(),
        ReliabilityScheme::FromFile(p) => format!("from_file:{}", p.display()),
    }
}

fn write_meta(spec: &SweepSpec, path: &Path) -> Result<()> {
    let meta = Meta {
        artifact: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        gamma_values: spec.sorted_gammas(),
        n_runs: spec.n_runs,
        base_seed: spec.base_seed,
        config: &spec.config,
        reliability_scheme: scheme_label(&spec.reliability),
        redraw_reliability: spec.redraw_reliability,
        solver: &spec.solver,
        metrics: &spec.metrics,
        definitions: definitions(),
    };
    let text = serde_json::to_string_pretty(&meta).expect("meta serializes");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
