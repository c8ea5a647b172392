//! Proximal-gradient dual ascent.
//!
//! Each outer iteration takes one backtracking proximal-gradient ascent step
//! on the smooth Lagrangian part at fixed multipliers, then one projected
//! subgradient step on the multipliers evaluated at the new primal iterate.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{complex_gaussian, rng_for, BeamformingMatrix, ChannelMatrix, SystemConfig, STREAM_PRIMAL_INIT};
use crate::objective::{
    frobenius_sq, min_rate_nats, rates_nats, smooth_gradient, smooth_value, DualState,
};
use crate::prox::{penalty_value, prox_step, PenaltyParams};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverParams {
    /// Initial primal step, restored at the start of every outer iteration.
    pub eta_x_init: f64,
    /// Dual step size for the multiplier updates.
    pub dual_step: f64,
    pub backtrack_shrink: f64,
    pub max_iters: usize,
    pub max_backtracks: usize,
    /// Stop once `‖W_{k+1} − W_k‖_F` drops below this.
    pub tolerance: f64,
    pub lambda1_init: f64,
    pub lambda2_init: f64,
    pub mu_init: f64,
    /// Update `λ2`; when disabled it is pinned at zero.
    pub enable_lambda2: bool,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            eta_x_init: 0.025,
            dual_step: 0.025,
            backtrack_shrink: 0.5,
            max_iters: 3000,
            max_backtracks: 50,
            tolerance: 1e-12,
            lambda1_init: 0.04,
            lambda2_init: 0.06,
            mu_init: 0.05,
            enable_lambda2: true,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParam {
                    name,
                    reason: format!("{v} is not positive"),
                })
            }
        };
        positive("eta_x_init", self.eta_x_init)?;
        positive("dual_step", self.dual_step)?;
        positive("tolerance", self.tolerance)?;
        if !(self.backtrack_shrink > 0.0 && self.backtrack_shrink < 1.0) {
            return Err(Error::InvalidParam {
                name: "backtrack_shrink",
                reason: format!("{} is not in (0, 1)", self.backtrack_shrink),
            });
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParam {
                name: "max_iters",
                reason: "must be at least 1".into(),
            });
        }
        if self.max_backtracks == 0 {
            return Err(Error::InvalidParam {
                name: "max_backtracks",
                reason: "must be at least 1".into(),
            });
        }
        for (name, v) in [
            ("lambda1_init", self.lambda1_init),
            ("lambda2_init", self.lambda2_init),
            ("mu_init", self.mu_init),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParam {
                    name,
                    reason: format!("{v} is negative"),
                });
            }
        }
        Ok(())
    }

    pub fn initial_duals(&self, n_users: usize) -> DualState {
        let lambda2 = if self.enable_lambda2 {
            self.lambda2_init
        } else {
            0.0
        };
        DualState::uniform(n_users, self.lambda1_init, lambda2, self.mu_init)
    }
}

/// State after outer iteration `iter` (1-based), duals already updated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    /// Penalised objective `Σ ρ_j r_j − penalty`.
    pub objective: f64,
    /// Smooth Lagrangian part at the multipliers used for the primal step.
    pub smooth: f64,
    pub penalty: f64,
    pub rates_nats: Vec<f64>,
    pub se_bps_hz: f64,
    pub power: f64,
    pub duals: DualState,
    pub eta: f64,
    pub backtracks: usize,
    pub line_search_exhausted: bool,
    pub primal_change: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterateTrace {
    pub records: Vec<IterationRecord>,
    /// Primal iterates kept at a few checkpoints, keyed by iteration.
    pub snapshots: Vec<(usize, BeamformingMatrix)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub w_final: BeamformingMatrix,
    pub duals_final: DualState,
    /// Multipliers the last primal step was taken with.
    pub duals_last_step: DualState,
    /// Step accepted by the last primal update.
    pub eta_last_step: f64,
    pub trace: IterateTrace,
    pub converged: bool,
    pub iterations: usize,
}

impl SolveResult {
    pub fn final_primal_change(&self) -> f64 {
        self.trace
            .records
            .last()
            .map_or(f64::INFINITY, |r| r.primal_change)
    }
}

/// Complex Gaussian start rescaled onto the power budget.
pub fn initialize_primal(config: &SystemConfig, seed: u64) -> BeamformingMatrix {
    let mut rng = rng_for(seed, STREAM_PRIMAL_INIT);
    let mut w = complex_gaussian(&mut rng, config.n_tx, config.n_users);
    let scale = (config.power_budget / frobenius_sq(&w)).sqrt();
    w.mapv_inplace(|z| z * scale);
    BeamformingMatrix::new(w).expect("finite complex Gaussian draw")
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrimalStep {
    pub w: BeamformingMatrix,
    pub eta: f64,
    /// Number of step shrinks before acceptance.
    pub backtracks: usize,
    /// The sufficient-increase test never passed; the last trial was kept.
    pub exhausted: bool,
    /// Smooth value at the starting point.
    pub smooth_before: f64,
}

fn real_inner(a: &crate::model::CMatrix, b: &crate::model::CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

/// One backtracking proximal-gradient ascent step at fixed multipliers.
///
/// Trial `z(η) = prox(W + ηG, η)` is accepted once
/// `f(z) ≥ f(W) + ⟨G, z − W⟩ − ‖z − W‖² / 2η`.
pub fn primal_update(
    w: &BeamformingMatrix,
    duals: &DualState,
    h: &ChannelMatrix,
    penalty: &PenaltyParams<'_>,
    config: &SystemConfig,
    params: &SolverParams,
) -> Result<PrimalStep> {
    let f0 = smooth_value(w, h, config, duals)?;
    let grad = smooth_gradient(w, h, config, duals)?;
    if !f0.is_finite() || grad.iter().any(|g| !g.re.is_finite() || !g.im.is_finite()) {
        return Err(Error::NonFinite {
            what: "gradient",
            iteration: 0,
        });
    }

    let mut last = None;
    for backtracks in 0..=params.max_backtracks {
        let eta = params.eta_x_init * params.backtrack_shrink.powi(backtracks as i32);
        let forward = BeamformingMatrix::new(&**w + &grad.mapv(|g| g * eta)).map_err(|_| {
            Error::NonFinite {
                what: "gradient step",
                iteration: 0,
            }
        })?;
        let z = prox_step(&forward, eta, penalty)?;
        let diff = &*z - &**w;
        let model = f0 + real_inner(&grad, &diff) - frobenius_sq(&diff) / (2.0 * eta);
        let fz = smooth_value(&z, h, config, duals)?;
        if fz >= model {
            return Ok(PrimalStep {
                w: z,
                eta,
                backtracks,
                exhausted: false,
                smooth_before: f0,
            });
        }
        last = Some((z, eta, backtracks));
    }
    let (z, eta, backtracks) = last.expect("at least one trial");
    Ok(PrimalStep {
        w: z,
        eta,
        backtracks,
        exhausted: true,
        smooth_before: f0,
    })
}

/// Projected dual subgradient step at the new primal iterate.
pub fn dual_update(
    duals: &DualState,
    rates_nats: &[f64],
    power: f64,
    config: &SystemConfig,
    params: &SolverParams,
) -> DualState {
    let alpha = params.dual_step;
    let rmin = min_rate_nats(config);
    let lambda1 = duals
        .lambda1
        .iter()
        .zip(rates_nats)
        .zip(&rmin)
        .map(|((l, r), rm)| (l + alpha * (rm - r)).max(0.0))
        .collect();
    let lambda2 = if params.enable_lambda2 {
        duals
            .lambda2
            .iter()
            .zip(rates_nats)
            .map(|(l, r)| (l - alpha * r).max(0.0))
            .collect()
    } else {
        duals.lambda2.clone()
    };
    let mu = (duals.mu + alpha * (power - config.power_budget)).max(0.0);
    DualState {
        lambda1,
        lambda2,
        mu,
    }
}

/// `‖W − prox(W + ηG(W), η)‖_F`; zero exactly at stationary points.
pub fn fixed_point_residual(
    w: &BeamformingMatrix,
    duals: &DualState,
    eta: f64,
    h: &ChannelMatrix,
    penalty: &PenaltyParams<'_>,
    config: &SystemConfig,
) -> Result<f64> {
    let grad = smooth_gradient(w, h, config, duals)?;
    let forward = BeamformingMatrix::new(&**w + &grad.mapv(|g| g * eta))?;
    let z = prox_step(&forward, eta, penalty)?;
    Ok(frobenius_sq(&(&*z - &**w)).sqrt())
}

/// Runs the solver from the seeded initial point.
pub fn solve(
    h: &ChannelMatrix,
    penalty: &PenaltyParams<'_>,
    config: &SystemConfig,
    params: &SolverParams,
    seed: u64,
) -> Result<SolveResult> {
    let w0 = initialize_primal(config, seed);
    solve_from(w0, h, penalty, config, params)
}

/// Runs the solver from a given starting beamformer.
pub fn solve_from(
    w0: BeamformingMatrix,
    h: &ChannelMatrix,
    penalty: &PenaltyParams<'_>,
    config: &SystemConfig,
    params: &SolverParams,
) -> Result<SolveResult> {
    config.validate()?;
    params.validate()?;
    let shape = (config.n_tx, config.n_users);
    h.expect_shape(shape)?;
    w0.expect_shape(shape)?;
    penalty.beta.expect_shape(shape)?;

    let mid = params.max_iters.div_ceil(2);
    let mut w = w0;
    let mut duals = params.initial_duals(config.n_users);
    let mut trace = IterateTrace::default();
    let mut converged = false;
    let mut last_step = (duals.clone(), params.eta_x_init);

    for iter in 1..=params.max_iters {
        let step = primal_update(&w, &duals, h, penalty, config, params).map_err(|e| match e {
            Error::NonFinite { what, .. } => Error::NonFinite {
                what,
                iteration: iter,
            },
            other => other,
        })?;
        let primal_change = frobenius_sq(&(&*step.w - &*w)).sqrt();
        w = step.w;

        let rates = rates_nats(&w, h, config.noise_variance)?;
        let power = frobenius_sq(&w);
        if !power.is_finite() || rates.iter().any(|r| !r.is_finite()) {
            return Err(Error::NonFinite {
                what: "iterate",
                iteration: iter,
            });
        }
        let penalty_now = penalty_value(&w, penalty)?;
        let weighted: f64 = config
            .fairness_weights
            .iter()
            .zip(&rates)
            .map(|(rho, r)| rho * r)
            .sum();
        let smooth = smooth_value(&w, h, config, &duals)?;
        last_step = (duals.clone(), step.eta);

        duals = dual_update(&duals, &rates, power, config, params);
        let se = rates.iter().sum::<f64>() / (config.n_users as f64 * std::f64::consts::LN_2);

        converged = primal_change < params.tolerance;
        let is_last = converged || iter == params.max_iters;
        if iter == 1 || iter == mid || is_last {
            trace.snapshots.push((iter, w.clone()));
        }
        trace.records.push(IterationRecord {
            iter,
            objective: weighted - penalty_now,
            smooth,
            penalty: penalty_now,
            rates_nats: rates,
            se_bps_hz: se,
            power,
            duals: duals.clone(),
            eta: step.eta,
            backtracks: step.backtracks,
            line_search_exhausted: step.exhausted,
            primal_change,
        });
        if converged {
            break;
        }
    }

    let iterations = trace.records.len();
    Ok(SolveResult {
        w_final: w,
        duals_final: duals,
        duals_last_step: last_step.0,
        eta_last_step: last_step.1,
        trace,
        converged,
        iterations,
    })
}
