//! Performance metrics of a solved beamformer and their aggregation across
//! Monte-Carlo runs.
//!
//! RL (reliability score) is defined here as the percentage of unreliable
//! connections (`β < reliability_threshold`) whose beamforming weight is
//! zero. BMD is the percentage of beamformer entries that are nonzero.
//! Both use a zero threshold relative to the largest entry modulus, so they
//! are invariant to rescaling `W`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{BeamformingMatrix, ChannelMatrix, ReliabilityMatrix, SystemConfig};
use crate::objective::{frobenius_sq, sinrs};

pub const RL_DEFINITION: &str = "100 * (#connections with beta < threshold and |w| <= zero_tol*max|w|) / (#connections with beta < threshold); 100 when no connection is below threshold";
pub const BMD_DEFINITION: &str = "100 * (#entries with |w| > zero_tol*max|w|) / (n_tx*n_users); 0 for W = 0";
pub const PW_DEFINITION: &str = "trace(W W^H) of the final iterate, watts";

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricsOptions {
    /// Entries at or below `zero_tol * max|w|` count as zero.
    pub zero_tol: f64,
    pub reliability_threshold: f64,
}

impl Default for MetricsOptions {
    fn default() -> Self {
        MetricsOptions {
            zero_tol: 1e-6,
            reliability_threshold: 0.5,
        }
    }
}

/// Metrics of one solved run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub se_bps_hz: f64,
    pub ri_bps: Vec<f64>,
    pub ri_avg_bps: f64,
    pub rl_percent: f64,
    pub bmd_percent: f64,
    pub pw_watts: f64,
}

/// Average per-user spectral efficiency in bit/s/Hz.
pub fn spectral_efficiency(
    w: &BeamformingMatrix,
    h: &ChannelMatrix,
    config: &SystemConfig,
) -> Result<f64> {
    let gammas = sinrs(w, h, config.noise_variance)?;
    Ok(gammas.iter().map(|g| g.ln_1p()).sum::<f64>()
        / (gammas.len() as f64 * std::f64::consts::LN_2))
}

fn max_modulus(w: &BeamformingMatrix) -> f64 {
    w.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Occupancy mask: `true` where `|w_ij| > zero_tol · max|w|`.
pub fn support_mask(w: &BeamformingMatrix, zero_tol: f64) -> ndarray::Array2<bool> {
    let cutoff = zero_tol * max_modulus(w);
    w.mapv(|z| {
        let m = z.norm();
        m > 0.0 && m > cutoff
    })
}

pub fn beamforming_density(w: &BeamformingMatrix, zero_tol: f64) -> f64 {
    let mask = support_mask(w, zero_tol);
    let active = mask.iter().filter(|b| **b).count();
    100.0 * active as f64 / mask.len() as f64
}

pub fn reliability_score(
    w: &BeamformingMatrix,
    beta: &ReliabilityMatrix,
    zero_tol: f64,
    reliability_threshold: f64,
) -> Result<f64> {
    beta.expect_shape(w.dim())?;
    let mask = support_mask(w, zero_tol);
    let (unreliable, silenced) = mask
        .iter()
        .zip(beta.iter())
        .filter(|(_, b)| **b < reliability_threshold)
        .fold((0usize, 0usize), |(u, s), (active, _)| {
            (u + 1, s + usize::from(!*active))
        });
    if unreliable == 0 {
        return Ok(100.0);
    }
    Ok(100.0 * silenced as f64 / unreliable as f64)
}

pub fn power_used(w: &BeamformingMatrix) -> f64 {
    frobenius_sq(w)
}

pub fn evaluate(
    w: &BeamformingMatrix,
    h: &ChannelMatrix,
    beta: &ReliabilityMatrix,
    config: &SystemConfig,
    options: &MetricsOptions,
) -> Result<MetricsReport> {
    let bw = config.per_user_bandwidth();
    let gammas = sinrs(w, h, config.noise_variance)?;
    let se = spectral_efficiency(w, h, config)?;
    Ok(MetricsReport {
        se_bps_hz: se,
        ri_bps: gammas
            .iter()
            .map(|g| g.ln_1p() / std::f64::consts::LN_2 * bw)
            .collect(),
        ri_avg_bps: se * bw,
        rl_percent: reliability_score(w, beta, options.zero_tol, options.reliability_threshold)?,
        bmd_percent: beamforming_density(w, options.zero_tol),
        pw_watts: power_used(w),
    })
}

/// Sample mean and (n−1)-denominator standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    /// Welford's online update; zero spread for a single sample.
    pub fn of(values: impl IntoIterator<Item = f64>) -> Option<Summary> {
        let mut n = 0usize;
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for x in values {
            n += 1;
            let delta = x - mean;
            mean += delta / n as f64;
            m2 += delta * (x - mean);
        }
        match n {
            0 => None,
            1 => Some(Summary { mean, std: 0.0 }),
            _ => Some(Summary {
                mean,
                std: (m2 / (n - 1) as f64).sqrt(),
            }),
        }
    }

    fn scaled(self, factor: f64) -> Summary {
        Summary {
            mean: self.mean * factor,
            std: self.std * factor,
        }
    }
}

/// Mean/std of every metric across runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateReport {
    pub n_runs: usize,
    pub se_bps_hz: Summary,
    /// Derived from `se_bps_hz` so the rate identity holds exactly.
    pub ri_avg_bps: Summary,
    pub rl_percent: Summary,
    pub bmd_percent: Summary,
    pub pw_watts: Summary,
}

/// Aggregates runs that share one scenario (`per_user_bandwidth = B / M`).
pub fn aggregate(reports: &[MetricsReport], per_user_bandwidth: f64) -> Result<AggregateReport> {
    let stat = |f: fn(&MetricsReport) -> f64| {
        Summary::of(reports.iter().map(f)).ok_or(Error::EmptyAggregate)
    };
    let se = stat(|r| r.se_bps_hz)?;
    Ok(AggregateReport {
        n_runs: reports.len(),
        se_bps_hz: se,
        ri_avg_bps: se.scaled(per_user_bandwidth),
        rl_percent: stat(|r| r.rl_percent)?,
        bmd_percent: stat(|r| r.bmd_percent)?,
        pw_watts: stat(|r| r.pw_watts)?,
    })
}
