//! SINR, rates and the smooth part of the Lagrangian together with its
//! analytic gradient.
//!
//! Rates are in nats internally. The smooth part is
//!
//! ```text
//! f(W) = Σ_j ω_j ln(1 + γ_j) − Σ_j λ1_j R_min,j − μ (‖W‖²_F − P_t),
//! ω_j  = ρ_j + λ1_j − λ2_j
//! ```
//!
//! Gradient convention: each complex entry is treated as a pair of real
//! variables and [`smooth_gradient`] returns `∂f/∂Re + i ∂f/∂Im`. With this
//! scaling the power term contributes exactly `−2μW`, so the ascent step
//! `W + ηG` is the primal update as written in the algorithm.

use ndarray::{Array2, Zip};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{BeamformingMatrix, ChannelMatrix, CMatrix, SystemConfig};

/// Lagrange multipliers; all entries are kept nonnegative by projection.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualState {
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
    pub mu: f64,
}

impl DualState {
    pub fn zeros(n_users: usize) -> Self {
        DualState {
            lambda1: vec![0.0; n_users],
            lambda2: vec![0.0; n_users],
            mu: 0.0,
        }
    }

    pub fn uniform(n_users: usize, lambda1: f64, lambda2: f64, mu: f64) -> Self {
        DualState {
            lambda1: vec![lambda1; n_users],
            lambda2: vec![lambda2; n_users],
            mu,
        }
    }

    pub fn is_nonnegative(&self) -> bool {
        self.mu >= 0.0 && self.lambda1.iter().chain(&self.lambda2).all(|v| *v >= 0.0)
    }

    pub fn min_value(&self) -> f64 {
        self.lambda1
            .iter()
            .chain(&self.lambda2)
            .fold(self.mu, |acc, v| acc.min(*v))
    }
}

/// Per-user weights `ω_j = ρ_j + λ1_j − λ2_j` multiplying the log-rates.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveWeights(pub Vec<f64>);

impl EffectiveWeights {
    pub fn new(config: &SystemConfig, duals: &DualState) -> Self {
        EffectiveWeights(
            config
                .fairness_weights
                .iter()
                .zip(&duals.lambda1)
                .zip(&duals.lambda2)
                .map(|((rho, l1), l2)| rho + l1 - l2)
                .collect(),
        )
    }
}

/// Minimum rates converted to nats per channel use over each user's
/// `B / M` share of the band.
pub fn min_rate_nats(config: &SystemConfig) -> Vec<f64> {
    let bw = config.per_user_bandwidth();
    config
        .min_rate_bps
        .iter()
        .map(|r| r / bw * std::f64::consts::LN_2)
        .collect()
}

fn check_shapes(w: &BeamformingMatrix, h: &ChannelMatrix) -> Result<()> {
    w.expect_shape(h.dim())
}

/// `gains[[m, j]] = h_mᴴ w_j`.
fn link_gains(w: &BeamformingMatrix, h: &ChannelMatrix) -> Array2<Complex64> {
    h.t().mapv(|z| z.conj()).dot(&**w)
}

/// Signal power and interference-plus-noise seen by every user.
struct LinkBudget {
    gains: Array2<Complex64>,
    signal: Vec<f64>,
    denom: Vec<f64>,
}

impl LinkBudget {
    fn new(w: &BeamformingMatrix, h: &ChannelMatrix, noise_variance: f64) -> Self {
        let gains = link_gains(w, h);
        let m_users = gains.nrows();
        let mut signal = Vec::with_capacity(m_users);
        let mut denom = Vec::with_capacity(m_users);
        for m in 0..m_users {
            let row = gains.row(m);
            signal.push(row[m].norm_sqr());
            let interference: f64 = row
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != m)
                .map(|(_, a)| a.norm_sqr())
                .sum();
            denom.push(interference + noise_variance);
        }
        LinkBudget {
            gains,
            signal,
            denom,
        }
    }

    fn sinr(&self, m: usize) -> f64 {
        self.signal[m] / self.denom[m]
    }
}

/// SINR of user `m`.
pub fn sinr(w: &BeamformingMatrix, h: &ChannelMatrix, noise_variance: f64, m: usize) -> Result<f64> {
    check_shapes(w, h)?;
    if m >= h.n_users() {
        return Err(Error::UserIndex {
            index: m,
            n_users: h.n_users(),
        });
    }
    Ok(LinkBudget::new(w, h, noise_variance).sinr(m))
}

/// SINR of every user.
pub fn sinrs(w: &BeamformingMatrix, h: &ChannelMatrix, noise_variance: f64) -> Result<Vec<f64>> {
    check_shapes(w, h)?;
    let budget = LinkBudget::new(w, h, noise_variance);
    Ok((0..h.n_users()).map(|m| budget.sinr(m)).collect())
}

pub fn user_rate_nats(
    w: &BeamformingMatrix,
    h: &ChannelMatrix,
    noise_variance: f64,
    m: usize,
) -> Result<f64> {
    sinr(w, h, noise_variance, m).map(f64::ln_1p)
}

pub fn rates_nats(w: &BeamformingMatrix, h: &ChannelMatrix, noise_variance: f64) -> Result<Vec<f64>> {
    Ok(sinrs(w, h, noise_variance)?
        .into_iter()
        .map(f64::ln_1p)
        .collect())
}

/// `‖W‖²_F = trace(W Wᴴ)`.
pub(crate) fn frobenius_sq(w: &CMatrix) -> f64 {
    w.iter().map(|z| z.norm_sqr()).sum()
}

fn smooth_from_rates(rates: &[f64], w: &BeamformingMatrix, config: &SystemConfig, duals: &DualState) -> f64 {
    let weights = EffectiveWeights::new(config, duals);
    let rate_term: f64 = weights.0.iter().zip(rates).map(|(o, r)| o * r).sum();
    let rmin_term: f64 = duals
        .lambda1
        .iter()
        .zip(min_rate_nats(config))
        .map(|(l, r)| l * r)
        .sum();
    rate_term - rmin_term - duals.mu * (frobenius_sq(w) - config.power_budget)
}

/// Smooth part of the Lagrangian at `w`.
pub fn smooth_value(
    w: &BeamformingMatrix,
    h: &ChannelMatrix,
    config: &SystemConfig,
    duals: &DualState,
) -> Result<f64> {
    let rates = rates_nats(w, h, config.noise_variance)?;
    Ok(smooth_from_rates(&rates, w, config, duals))
}

/// Ascent direction of [`smooth_value`] in the real-pair convention.
///
/// For user `m` with signal `S_m`, interference-plus-noise `D_m` and
/// `a_mj = h_mᴴ w_j`:
///
/// ```text
/// ∂γ_m/∂w_m =  2 h_m a_mm / D_m
/// ∂γ_m/∂w_i = −2 γ_m h_m a_mi / D_m     (i ≠ m)
/// ```
pub fn smooth_gradient(
    w: &BeamformingMatrix,
    h: &ChannelMatrix,
    config: &SystemConfig,
    duals: &DualState,
) -> Result<CMatrix> {
    check_shapes(w, h)?;
    let budget = LinkBudget::new(w, h, config.noise_variance);
    let weights = EffectiveWeights::new(config, duals);
    let n_users = h.n_users();

    // coeff[[m, i]] multiplies h_m in column i of the gradient.
    let mut coeff = Array2::<Complex64>::zeros((n_users, n_users));
    for m in 0..n_users {
        let gamma = budget.sinr(m);
        let c = 2.0 * weights.0[m] / ((1.0 + gamma) * budget.denom[m]);
        for i in 0..n_users {
            let a = budget.gains[[m, i]];
            coeff[[m, i]] = if i == m { a * c } else { -a * (c * gamma) };
        }
    }

    let mut grad = h.dot(&coeff);
    let two_mu = 2.0 * duals.mu;
    Zip::from(&mut grad).and(&**w).for_each(|g, x| *g -= x * two_mu);
    Ok(grad)
}

/// Slack of the per-user rate constraints (nats) and of the power budget.
/// Positive slack means the constraint holds.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintResiduals {
    pub rate_slack: Vec<f64>,
    pub power_slack: f64,
}

pub fn constraint_residuals(
    w: &BeamformingMatrix,
    h: &ChannelMatrix,
    config: &SystemConfig,
) -> Result<ConstraintResiduals> {
    let rates = rates_nats(w, h, config.noise_variance)?;
    let rate_slack = rates
        .iter()
        .zip(min_rate_nats(config))
        .map(|(r, rmin)| r - rmin)
        .collect();
    Ok(ConstraintResiduals {
        rate_slack,
        power_slack: config.power_budget - frobenius_sq(w),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{complex_gaussian, rng_for};
    use approx::assert_relative_eq;
    use ndarray::array;
    use rand::Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn instance(seed: u64, n_tx: usize, n_users: usize) -> (BeamformingMatrix, ChannelMatrix) {
        let mut rng = rng_for(seed, 99);
        let w = BeamformingMatrix::new(complex_gaussian(&mut rng, n_tx, n_users)).unwrap();
        let h = ChannelMatrix::new(complex_gaussian(&mut rng, n_tx, n_users)).unwrap();
        (w, h)
    }

    /// Term-by-term re-summation without the matrix product.
    fn naive_sinr(w: &CMatrix, h: &CMatrix, sigma2: f64, m: usize) -> f64 {
        let inner = |j: usize| -> Complex64 {
            (0..h.nrows()).map(|i| h[[i, m]].conj() * w[[i, j]]).sum()
        };
        let mut interference = 0.0;
        for j in 0..w.ncols() {
            if j != m {
                interference += inner(j).norm_sqr();
            }
        }
        inner(m).norm_sqr() / (interference + sigma2)
    }

    #[test]
    fn zero_beamformer_has_zero_sinr_and_gradient() {
        let (_, h) = instance(1, 4, 3);
        let w = BeamformingMatrix::zeros(4, 3);
        let config = SystemConfig::with_dims(4, 3);
        for m in 0..3 {
            assert_eq!(sinr(&w, &h, 1.0, m).unwrap(), 0.0);
            assert_eq!(user_rate_nats(&w, &h, 1.0, m).unwrap(), 0.0);
        }
        let duals = DualState::uniform(3, 0.3, 0.1, 0.7);
        let g = smooth_gradient(&w, &h, &config, &duals).unwrap();
        assert!(g.iter().all(|z| *z == c(0.0, 0.0)));
        let zero_duals = DualState::zeros(3);
        assert_eq!(smooth_value(&w, &h, &config, &zero_duals).unwrap(), 0.0);
    }

    #[test]
    fn unit_sinr_by_hand() {
        let h = ChannelMatrix::new(array![[c(1.0, 0.0)], [c(0.0, 0.0)]]).unwrap();
        let w = BeamformingMatrix::new(array![[c(1.0, 0.0)], [c(0.0, 0.0)]]).unwrap();
        assert_eq!(sinr(&w, &h, 1.0, 0).unwrap(), 1.0);
        assert_relative_eq!(user_rate_nats(&w, &h, 1.0, 0).unwrap(), std::f64::consts::LN_2);
        assert!(matches!(sinr(&w, &h, 1.0, 1), Err(Error::UserIndex { .. })));
    }

    #[test]
    fn sinr_matches_naive_summation() {
        let (w, h) = instance(5, 4, 3);
        for m in 0..3 {
            let fast = sinr(&w, &h, 0.7, m).unwrap();
            let slow = naive_sinr(&w, &h, 0.7, m);
            assert_relative_eq!(fast, slow, max_relative = 1e-12);
            assert_eq!(user_rate_nats(&w, &h, 0.7, m).unwrap(), fast.ln_1p());
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let (w, _) = instance(1, 4, 2);
        let (_, h) = instance(1, 4, 3);
        assert!(matches!(sinrs(&w, &h, 1.0), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn global_phase_leaves_sinr_unchanged() {
        let (w, h) = instance(2, 6, 3);
        let rot = Complex64::from_polar(1.0, 0.83);
        let rotated = BeamformingMatrix::new(w.mapv(|z| z * rot)).unwrap();
        let a = sinrs(&w, &h, 1.0).unwrap();
        let b = sinrs(&rotated, &h, 1.0).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_relative_eq!(x, y, max_relative = 1e-12);
        }
    }

    #[test]
    fn plain_sum_rate_when_duals_vanish() {
        let (w, h) = instance(3, 5, 2);
        let config = SystemConfig::with_dims(5, 2);
        let value = smooth_value(&w, &h, &config, &DualState::zeros(2)).unwrap();
        let sum: f64 = rates_nats(&w, &h, 1.0).unwrap().iter().sum();
        assert_relative_eq!(value, sum, max_relative = 1e-14);
    }

    #[test]
    fn larger_mu_lowers_value_when_over_budget() {
        let (w, h) = instance(4, 4, 2);
        let mut config = SystemConfig::with_dims(4, 2);
        config.power_budget = 0.5 * frobenius_sq(&w);
        let lo = smooth_value(&w, &h, &config, &DualState::uniform(2, 0.1, 0.1, 0.1)).unwrap();
        let hi = smooth_value(&w, &h, &config, &DualState::uniform(2, 0.1, 0.1, 0.9)).unwrap();
        assert!(hi < lo);
    }

    #[test]
    fn directional_derivative_matches_gradient() {
        let (w, h) = instance(6, 6, 3);
        let config = SystemConfig::with_dims(6, 3);
        let duals = DualState {
            lambda1: vec![0.2, 0.0, 0.5],
            lambda2: vec![0.1, 0.3, 0.0],
            mu: 0.05,
        };
        let g = smooth_gradient(&w, &h, &config, &duals).unwrap();
        let mut rng = rng_for(11, 5);
        let dir = complex_gaussian(&mut rng, 6, 3);
        let t = 1e-6;
        let plus = BeamformingMatrix::new(&*w + &dir.mapv(|z| z * t)).unwrap();
        let minus = BeamformingMatrix::new(&*w - &dir.mapv(|z| z * t)).unwrap();
        let fd = (smooth_value(&plus, &h, &config, &duals).unwrap()
            - smooth_value(&minus, &h, &config, &duals).unwrap())
            / (2.0 * t);
        // Real inner product of the real-pair vectors.
        let analytic: f64 = g.iter().zip(dir.iter()).map(|(a, d)| (a.conj() * d).re).sum();
        assert_relative_eq!(fd, analytic, max_relative = 1e-5);
    }

    #[test]
    fn residual_signs() {
        let (w, h) = instance(7, 4, 2);
        let mut config = SystemConfig::with_dims(4, 2);
        config.power_budget = frobenius_sq(&w);
        let res = constraint_residuals(&w, &h, &config).unwrap();
        assert_eq!(res.power_slack, 0.0);
        let rates = rates_nats(&w, &h, 1.0).unwrap();
        let rmin = min_rate_nats(&config);
        for j in 0..2 {
            assert_eq!(res.rate_slack[j] >= 0.0, rates[j] >= rmin[j]);
        }

        let zero = BeamformingMatrix::zeros(4, 2);
        let res = constraint_residuals(&zero, &h, &config).unwrap();
        for (s, r) in res.rate_slack.iter().zip(&rmin) {
            assert_eq!(*s, -r);
            assert!(*s < 0.0);
        }
    }

    #[test]
    fn min_rate_conversion() {
        let config = SystemConfig::reference_default();
        // 100 Mbit/s over 0.75 GHz is 2/15 bit per channel use.
        let expected = 2.0 / 15.0 * std::f64::consts::LN_2;
        for r in min_rate_nats(&config) {
            assert_relative_eq!(r, expected, max_relative = 1e-15);
        }
    }

    #[test]
    fn rate_is_monotone_in_sinr() {
        let mut rng = rng_for(0, 0);
        let (w, h) = instance(8, 3, 1);
        let mut prev = -1.0;
        for k in 0..20 {
            let scale = 0.1 * k as f64 + rng.gen::<f64>() * 0.01;
            let ws = BeamformingMatrix::new(w.mapv(|z| z * scale)).unwrap();
            let r = user_rate_nats(&ws, &h, 1.0, 0).unwrap();
            assert!(r >= prev);
            prev = r;
        }
    }
}
