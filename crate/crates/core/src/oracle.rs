//! Independent checks for the analytic pieces: central finite differences
//! for the gradient, a brute-force search for the prox, and the closed-form
//! single-user optimum.
//!
//! The scalar prox objective `κ|z| + |z − x|²/2` is invariant under a joint
//! rotation of `z` and `x`, and for fixed `|z|` the quadratic term is
//! smallest when `z` has the phase of `x`. The minimiser therefore lies on
//! the segment `[0, x]`, which reduces the search to one dimension.

use ndarray::{Array1, ArrayView1};
use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{rng_for, BeamformingMatrix, ChannelMatrix, CMatrix, SystemConfig};
use crate::objective::{smooth_gradient, smooth_value, DualState};
use crate::prox::soft_threshold;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    Real,
    Imag,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_abs_error: f64,
    /// `max_abs_error / (‖G‖_F + 1e-12)`.
    pub max_rel_error: f64,
    pub worst_coordinate: (usize, usize, Part),
    pub fd_step: f64,
}

/// Central-difference gradient of [`smooth_value`] in the same real-pair
/// convention as [`smooth_gradient`]. Truncation error is `O(step²)`; steps
/// around `1e-6` are appropriate for entries of order one.
pub fn fd_gradient(
    w: &BeamformingMatrix,
    h: &ChannelMatrix,
    config: &SystemConfig,
    duals: &DualState,
    step: f64,
) -> Result<CMatrix> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::InvalidParam {
            name: "step",
            reason: format!("{step} is not a positive number"),
        });
    }
    let mut grad = CMatrix::zeros(w.dim());
    let mut probe = (**w).clone();
    let eval = |m: &CMatrix| -> Result<f64> {
        let v = smooth_value(&BeamformingMatrix::new(m.clone())?, h, config, duals)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite {
                what: "function value",
                iteration: 0,
            })
        }
    };
    for ((i, j), g) in grad.indexed_iter_mut() {
        let orig = probe[[i, j]];
        for (part, unit) in [(Part::Real, Complex64::new(step, 0.0)), (Part::Imag, Complex64::new(0.0, step))] {
            probe[[i, j]] = orig + unit;
            let plus = eval(&probe)?;
            probe[[i, j]] = orig - unit;
            let minus = eval(&probe)?;
            probe[[i, j]] = orig;
            let d = (plus - minus) / (2.0 * step);
            match part {
                Part::Real => g.re = d,
                Part::Imag => g.im = d,
            }
        }
    }
    Ok(grad)
}

pub fn grad_check(
    w: &BeamformingMatrix,
    h: &ChannelMatrix,
    config: &SystemConfig,
    duals: &DualState,
    step: f64,
) -> Result<GradCheckReport> {
    let analytic = smooth_gradient(w, h, config, duals)?;
    let numeric = fd_gradient(w, h, config, duals, step)?;
    let norm = analytic.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let mut worst = (0.0, (0, 0, Part::Real));
    for ((i, j), a) in analytic.indexed_iter() {
        let n = numeric[[i, j]];
        for (err, part) in [((a.re - n.re).abs(), Part::Real), ((a.im - n.im).abs(), Part::Imag)] {
            if err > worst.0 {
                worst = (err, (i, j, part));
            }
        }
    }
    Ok(GradCheckReport {
        max_abs_error: worst.0,
        max_rel_error: worst.0 / (norm + 1e-12),
        worst_coordinate: worst.1,
        fd_step: step,
    })
}

/// Random instance with beamformer and channel entries uniform in
/// `[−2, 2] + i[−2, 2]`, multipliers uniform in `[0, 1]` and a unit power
/// budget.
pub fn random_instance(
    seed: u64,
    n_tx: usize,
    n_users: usize,
) -> Result<(BeamformingMatrix, ChannelMatrix, SystemConfig, DualState)> {
    let mut config = SystemConfig::with_dims(n_tx, n_users);
    // Keeps the constant μ·P_t term from dominating the FD roundoff.
    config.power_budget = 1.0;
    config.validate()?;
    let mut rng = rng_for(seed, 0x6772_6164);
    let entry = |rng: &mut rand_chacha::ChaCha8Rng| {
        Complex64::new(rng.gen_range(-2.0..=2.0), rng.gen_range(-2.0..=2.0))
    };
    let w = CMatrix::from_shape_simple_fn((n_tx, n_users), || entry(&mut rng));
    let h = CMatrix::from_shape_simple_fn((n_tx, n_users), || entry(&mut rng));
    let duals = DualState {
        lambda1: (0..n_users).map(|_| rng.gen::<f64>()).collect(),
        lambda2: (0..n_users).map(|_| rng.gen::<f64>()).collect(),
        mu: rng.gen::<f64>(),
    };
    Ok((BeamformingMatrix::new(w)?, ChannelMatrix::new(h)?, config, duals))
}

/// Minimises `κ|z| + |z − x|²/2` over `z = t·x/|x|`, `t ∈ [0, |x|]`, by a
/// grid of spacing `1e-4·|x|` followed by golden-section refinement around
/// the best grid point.
pub fn brute_force_prox_scalar(x: Complex64, kappa: f64) -> Complex64 {
    let r = x.norm();
    if r == 0.0 || kappa == 0.0 {
        return x;
    }
    let objective = |t: f64| kappa * t + 0.5 * (r - t) * (r - t);
    let n = 10_000usize;
    let dt = r / n as f64;
    let (mut best_k, mut best_v) = (0usize, objective(0.0));
    for k in 1..=n {
        let v = objective(k as f64 * dt);
        if v < best_v {
            best_k = k;
            best_v = v;
        }
    }
    let mut lo = (best_k as f64 - 1.0).max(0.0) * dt;
    let mut hi = ((best_k + 1) as f64 * dt).min(r);
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let a = hi - ratio * (hi - lo);
        let b = lo + ratio * (hi - lo);
        if objective(a) <= objective(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    let mut t = 0.5 * (lo + hi);
    // Endpoints of the segment are candidates too.
    for end in [0.0, r] {
        if objective(end) <= objective(t) {
            t = end;
        }
    }
    x * (t / r)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProxCheckReport {
    pub samples: usize,
    pub max_deviation: f64,
    pub worst_x: (f64, f64),
    pub worst_kappa: f64,
    /// Samples drawn with `κ = 0`; the closed form must return them unchanged.
    pub kappa_zero_samples: usize,
    pub kappa_zero_exact: bool,
}

/// Compares [`soft_threshold`] with [`brute_force_prox_scalar`] on random
/// `x ∈ [−3, 3]²`, `κ ∈ [0, 3]`; every tenth sample uses `κ = 0`.
pub fn prox_check(samples: usize, seed: u64) -> ProxCheckReport {
    let mut rng = rng_for(seed, 0x7072_6f78);
    let mut report = ProxCheckReport {
        samples,
        max_deviation: 0.0,
        worst_x: (0.0, 0.0),
        worst_kappa: 0.0,
        kappa_zero_samples: 0,
        kappa_zero_exact: true,
    };
    for k in 0..samples {
        let x = Complex64::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let kappa = if k % 10 == 0 { 0.0 } else { rng.gen_range(0.0..3.0) };
        let closed = soft_threshold(x, kappa);
        if kappa == 0.0 {
            report.kappa_zero_samples += 1;
            report.kappa_zero_exact &= closed == x;
        }
        let dev = (closed - brute_force_prox_scalar(x, kappa)).norm();
        if dev > report.max_deviation {
            report.max_deviation = dev;
            report.worst_x = (x.re, x.im);
            report.worst_kappa = kappa;
        }
    }
    report
}

/// Maximum-ratio transmission at full power for a single user.
pub fn single_user_optimum(
    h: ArrayView1<'_, Complex64>,
    power_budget: f64,
    noise_variance: f64,
) -> Result<(Array1<Complex64>, f64)> {
    let gain: f64 = h.iter().map(|z| z.norm_sqr()).sum();
    if gain == 0.0 {
        return Err(Error::ZeroChannel);
    }
    let scale = (power_budget / gain).sqrt();
    let w = h.mapv(|z| z * scale);
    Ok((w, (power_budget * gain / noise_variance).ln_1p()))
}
