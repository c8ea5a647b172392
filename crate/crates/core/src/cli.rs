//! Command-line front end.
//!
//! Exit codes: 0 success, 1 I/O, 2 config or usage, 3 solver abort,
//! 4 check failure. Flags take precedence over config-file values, which
//! take precedence over built-in defaults.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::Error;
use crate::harness::{
    definitions, emit_convergence_trace, emit_reliability_heatmap, emit_sparsity_pattern,
    format_summary_table, run_once, run_sweep, scheme_label, SweepSpec, REFERENCE_GAMMAS,
};
use crate::metrics::{MetricsOptions, MetricsReport};
use crate::model::{generate_reliability, load_scenario, Scenario};
use crate::oracle::{grad_check, prox_check, random_instance};
use crate::par::{parse_thread_limit, with_thread_limit, ExecMode};
use crate::solver::SolverParams;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_CHECK: i32 = 4;

pub const THREADS_ENV: &str = "BEAMSCULPT_THREADS";

const GRADCHECK_TOLERANCE: f64 = 1e-5;
const PROXCHECK_TOLERANCE: f64 = 5e-4;

#[derive(Debug, Parser)]
#[command(name = "beamsculpt", version, about = "Reliability-aware sparse beamforming")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one instance and write its trace, pattern and metrics.
    Solve(SolveArgs),
    /// Sweep sparsity weights over several seeded runs.
    Sweep(SweepArgs),
    /// Compare the analytic gradient with central finite differences.
    Gradcheck(GradcheckArgs),
    /// Compare the closed-form prox with a brute-force search.
    Proxcheck(ProxcheckArgs),
    /// Print the version.
    Version,
}

#[derive(Debug, Args)]
pub struct SolverFlags {
    /// Override the iteration cap.
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Override the initial primal step.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Override the dual step.
    #[arg(long)]
    pub dual_step: Option<f64>,
    /// Override the convergence tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Keep the second rate multiplier pinned at zero.
    #[arg(long)]
    pub no_lambda2: bool,
}

impl SolverFlags {
    fn params(&self) -> SolverParams {
        let mut p = SolverParams::default();
        if let Some(v) = self.max_iters {
            p.max_iters = v;
        }
        if let Some(v) = self.eta {
            p.eta_x_init = v;
        }
        if let Some(v) = self.dual_step {
            p.dual_step = v;
        }
        if let Some(v) = self.tol {
            p.tolerance = v;
        }
        if self.no_lambda2 {
            p.enable_lambda2 = false;
        }
        p
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Scenario JSON; the built-in 64x4 scenario when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Sparsity weight.
    #[arg(long, default_value_t = 0.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub solver: SolverFlags,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated sparsity weights.
    #[arg(long, value_delimiter = ',', default_values_t = REFERENCE_GAMMAS.to_vec())]
    pub gammas: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    pub runs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Draw a fresh reliability matrix for every run.
    #[arg(long)]
    pub redraw_reliability: bool,
    /// Run jobs on one thread.
    #[arg(long)]
    pub sequential: bool,
    #[command(flatten)]
    pub solver: SolverFlags,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 8)]
    pub ntx: usize,
    #[arg(long, default_value_t = 3)]
    pub users: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub step: f64,
}

#[derive(Debug, Args)]
pub struct ProxcheckArgs {
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. } | Error::Csv { .. } => EXIT_IO,
        Error::NonFinite { .. } | Error::ZeroChannel | Error::EmptyAggregate => EXIT_SOLVER,
        _ => EXIT_CONFIG,
    }
}

fn fail(err: &Error) -> i32 {
    eprintln!("error: {err}");
    exit_code(err)
}

fn load(path: Option<&Path>) -> Result<Scenario, i32> {
    match path {
        None => Ok(Scenario::default()),
        Some(p) => load_scenario(p).map_err(|e| {
            eprintln!("error: config {}: {e}", p.display());
            EXIT_CONFIG
        }),
    }
}

/// Parses `args` and runs the selected command, returning the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match cli.command {
        Command::Solve(a) => cmd_solve(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Gradcheck(a) => cmd_gradcheck(&a),
        Command::Proxcheck(a) => cmd_proxcheck(&a),
        Command::Version => {
            println!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"));
            EXIT_OK
        }
    }
}

#[derive(Serialize)]
struct SolveOutput<'a> {
    gamma: f64,
    seed: u64,
    converged: bool,
    iterations: usize,
    final_primal_change: f64,
    fixed_point_residual: f64,
    #[serde(flatten)]
    metrics: &'a MetricsReport,
    reliability_scheme: String,
    definitions: serde_json::Value,
}

pub fn cmd_solve(args: &SolveArgs) -> i32 {
    let scenario = match load(args.config.as_deref()) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let params = args.solver.params();
    if let Err(e) = params.validate() {
        return fail(&e);
    }
    let metrics = MetricsOptions::default();
    let config = &scenario.system;
    let beta = match generate_reliability(config, args.seed, &scenario.reliability) {
        Ok(b) => b,
        Err(e) => return fail(&e),
    };
    let (result, summary) = match run_once(config, &beta, args.gamma, &params, &metrics, args.seed) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };

    let out = &args.out;
    let written = fs::create_dir_all(out)
        .map_err(|e| Error::io(out, e))
        .and_then(|_| emit_convergence_trace(&result.trace, &out.join("trace.csv")))
        .and_then(|_| emit_sparsity_pattern(&result.w_final, metrics.zero_tol, &out.join("pattern.csv")))
        .and_then(|_| emit_reliability_heatmap(&beta, &out.join("reliability.csv")))
        .and_then(|_| {
            let doc = SolveOutput {
                gamma: args.gamma,
                seed: args.seed,
                converged: summary.converged,
                iterations: summary.iterations,
                final_primal_change: summary.final_primal_change,
                fixed_point_residual: summary.fixed_point_residual,
                metrics: &summary.metrics,
                reliability_scheme: scheme_label(&scenario.reliability),
                definitions: definitions(),
            };
            let path = out.join("metrics.json");
            let text = serde_json::to_string_pretty(&doc).expect("metrics serialize");
            fs::write(&path, text + "\n").map_err(|e| Error::io(path, e))
        });
    if let Err(e) = written {
        return fail(&e);
    }

    let m = &summary.metrics;
    println!(
        "gamma={} iterations={} converged={} SE={:.4} bps/Hz Ri={:.4} Gbps RL={:.2}% BMD={:.2}% PW={:.2} W",
        args.gamma,
        summary.iterations,
        summary.converged,
        m.se_bps_hz,
        m.ri_avg_bps / 1e9,
        m.rl_percent,
        m.bmd_percent,
        m.pw_watts
    );
    EXIT_OK
}

pub fn cmd_sweep(args: &SweepArgs) -> i32 {
    let scenario = match load(args.config.as_deref()) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let mut spec = SweepSpec::new(scenario.system, &args.out);
    spec.reliability = scenario.reliability;
    spec.gamma_values = args.gammas.clone();
    spec.n_runs = args.runs;
    spec.base_seed = args.seed;
    spec.redraw_reliability = args.redraw_reliability;
    spec.solver = args.solver.params();
    spec.exec = if args.sequential {
        ExecMode::Sequential
    } else {
        ExecMode::Parallel
    };

    let threads = parse_thread_limit(std::env::var(THREADS_ENV).ok().as_deref());
    let outcome = match with_thread_limit(threads, || run_sweep(&spec)) {
        Ok(o) => o,
        Err(e) => return fail(&e),
    };

    print!("{}", format_summary_table(&outcome.summary));
    for r in &outcome.runs {
        if let Err(msg) = &r.outcome {
            eprintln!("run gamma={} r={} failed: {msg}", r.gamma, r.run);
        }
    }
    if outcome.every_gamma_has_result() {
        EXIT_OK
    } else {
        EXIT_SOLVER
    }
}

pub fn cmd_gradcheck(args: &GradcheckArgs) -> i32 {
    let report = random_instance(args.seed, args.ntx, args.users)
        .and_then(|(w, h, config, duals)| grad_check(&w, &h, &config, &duals, args.step));
    match report {
        Ok(r) => {
            println!("{}", serde_json::to_string_pretty(&r).expect("report serializes"));
            if r.max_rel_error < GRADCHECK_TOLERANCE {
                EXIT_OK
            } else {
                eprintln!(
                    "gradient check failed: max relative error {:e} >= {GRADCHECK_TOLERANCE:e}",
                    r.max_rel_error
                );
                EXIT_CHECK
            }
        }
        Err(e) => fail(&e),
    }
}

pub fn cmd_proxcheck(args: &ProxcheckArgs) -> i32 {
    if args.samples == 0 {
        eprintln!("error: --samples must be at least 1");
        return EXIT_CONFIG;
    }
    let report = prox_check(args.samples, args.seed);
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    if report.max_deviation < PROXCHECK_TOLERANCE && report.kappa_zero_exact {
        EXIT_OK
    } else {
        eprintln!("prox check failed: max deviation {:e}", report.max_deviation);
        EXIT_CHECK
    }
}
