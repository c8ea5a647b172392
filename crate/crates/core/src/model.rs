//! Scenario description, matrix newtypes and the seeded generators for
//! channels, reliability scores and initial beamformers.
//!
//! Every generator is a pure function of `(config, seed)`. Each one draws
//! from its own ChaCha8 stream so that, for a given seed, the channel and the
//! reliability matrix are independent of each other.

use std::fs;
use std::ops::Deref;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense complex matrix used for channels, beamformers and gradients.
pub type CMatrix = Array2<Complex64>;

const STREAM_CHANNEL: u64 = 1;
const STREAM_RELIABILITY: u64 = 2;
pub(crate) const STREAM_PRIMAL_INIT: u64 = 3;

/// Physical downlink scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemConfig {
    pub n_tx: usize,
    pub n_users: usize,
    pub bandwidth_hz: f64,
    /// Total transmit power budget in watts.
    pub power_budget: f64,
    pub noise_variance: f64,
    /// Per-user minimum rate in bit/s over the user's share of the band.
    pub min_rate_bps: Vec<f64>,
    /// Proportional-fairness weight of each user's log-rate.
    pub fairness_weights: Vec<f64>,
}

impl SystemConfig {
    /// 64 antennas, 4 users, 3 GHz, 2 kW, 100 Mbit/s minimum per user.
    pub fn reference_default() -> Self {
        Self::with_dims(64, 4)
    }

    /// Default scenario values with custom dimensions.
    pub fn with_dims(n_tx: usize, n_users: usize) -> Self {
        SystemConfig {
            n_tx,
            n_users,
            bandwidth_hz: DEFAULT_BANDWIDTH_HZ,
            power_budget: DEFAULT_POWER_BUDGET,
            noise_variance: DEFAULT_NOISE_VARIANCE,
            min_rate_bps: vec![DEFAULT_MIN_RATE_BPS; n_users],
            fairness_weights: vec![1.0; n_users],
        }
    }

    /// Bandwidth allotted to each user; the band is split uniformly.
    pub fn per_user_bandwidth(&self) -> f64 {
        self.bandwidth_hz / self.n_users as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_users == 0 {
            return Err(Error::invalid("n_users", "must be at least 1"));
        }
        if self.n_tx < self.n_users {
            return Err(Error::invalid(
                "n_tx",
                format!("{} antennas cannot serve {} users", self.n_tx, self.n_users),
            ));
        }
        positive("bandwidth_hz", self.bandwidth_hz)?;
        positive("power_budget", self.power_budget)?;
        positive("noise_variance", self.noise_variance)?;
        if self.fairness_weights.len() != self.n_users {
            return Err(Error::invalid(
                "fairness_weights",
                format!("expected {} entries, got {}", self.n_users, self.fairness_weights.len()),
            ));
        }
        if let Some(bad) = self
            .fairness_weights
            .iter()
            .find(|w| !(w.is_finite() && **w > 0.0))
        {
            return Err(Error::invalid("fairness_weights", format!("entry {bad} is not > 0")));
        }
        if self.min_rate_bps.len() != self.n_users {
            return Err(Error::invalid(
                "min_rate_bps",
                format!("expected {} entries, got {}", self.n_users, self.min_rate_bps.len()),
            ));
        }
        if let Some(bad) = self
            .min_rate_bps
            .iter()
            .find(|r| !(r.is_finite() && **r >= 0.0))
        {
            return Err(Error::invalid("min_rate_bps", format!("entry {bad} is not >= 0")));
        }
        Ok(())
    }
}

fn positive(key: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(key, format!("{value} is not a positive number")))
    }
}

pub const DEFAULT_BANDWIDTH_HZ: f64 = 3e9;
pub const DEFAULT_POWER_BUDGET: f64 = 2000.0;
pub const DEFAULT_NOISE_VARIANCE: f64 = 1.0;
pub const DEFAULT_MIN_RATE_BPS: f64 = 100e6;

macro_rules! complex_newtype {
    ($(#[$doc:meta])* $name:ident, $what:literal) => {
        $(#[$doc])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name(CMatrix);

        impl $name {
            /// Wraps a matrix, rejecting non-finite entries.
            pub fn new(m: CMatrix) -> Result<Self> {
                if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                    return Err(Error::InvalidParam {
                        name: $what,
                        reason: "matrix contains non-finite entries".into(),
                    });
                }
                Ok($name(m))
            }

            pub fn zeros(n_tx: usize, n_users: usize) -> Self {
                $name(CMatrix::zeros((n_tx, n_users)))
            }

            pub fn into_inner(self) -> CMatrix {
                self.0
            }

            pub fn n_tx(&self) -> usize {
                self.0.nrows()
            }

            pub fn n_users(&self) -> usize {
                self.0.ncols()
            }

            pub(crate) fn expect_shape(&self, shape: (usize, usize)) -> Result<()> {
                let actual = self.0.dim();
                if actual != shape {
                    return Err(Error::ShapeMismatch { what: $what, expected: shape, actual });
                }
                Ok(())
            }
        }

        impl Deref for $name {
            type Target = CMatrix;

            fn deref(&self) -> &CMatrix {
                &self.0
            }
        }
    };
}

complex_newtype!(
    /// `n_tx × n_users` channel; column `j` is user `j`'s channel vector.
    ChannelMatrix,
    "channel"
);

complex_newtype!(
    /// `n_tx × n_users` beamformer; column `j` is the precoder for user `j`.
    BeamformingMatrix,
    "beamformer"
);

/// Health score of every antenna/RF-chain connection, in `[0, 1]`.
/// 0 means failed or off, 1 means fully operational.
#[derive(Debug, Clone, PartialEq)]
pub struct ReliabilityMatrix(Array2<f64>);

impl ReliabilityMatrix {
    pub fn new(beta: Array2<f64>) -> Result<Self> {
        if let Some(bad) = beta.iter().find(|b| !(0.0..=1.0).contains(*b)) {
            return Err(Error::InvalidParam {
                name: "reliability",
                reason: format!("value {bad} outside [0, 1]"),
            });
        }
        Ok(ReliabilityMatrix(beta))
    }

    /// Replicates one score per antenna across all user columns.
    pub fn from_per_antenna(per_antenna: &[f64], n_users: usize) -> Result<Self> {
        let beta = Array2::from_shape_fn((per_antenna.len(), n_users), |(i, _)| per_antenna[i]);
        Self::new(beta)
    }

    pub fn uniform(n_tx: usize, n_users: usize, value: f64) -> Result<Self> {
        Self::new(Array2::from_elem((n_tx, n_users), value))
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    pub(crate) fn expect_shape(&self, shape: (usize, usize)) -> Result<()> {
        let actual = self.0.dim();
        if actual != shape {
            return Err(Error::ShapeMismatch {
                what: "reliability",
                expected: shape,
                actual,
            });
        }
        Ok(())
    }
}

impl Deref for ReliabilityMatrix {
    type Target = Array2<f64>;

    fn deref(&self) -> &Array2<f64> {
        &self.0
    }
}

/// How the reliability matrix of a scenario is obtained.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum ReliabilityScheme {
    /// One `Uniform[0, 1]` score per antenna, shared by every user column.
    #[default]
    PerAntennaUniform,
    /// CSV file with either `n_users` columns or a single per-antenna column.
    FromFile(PathBuf),
}

pub(crate) fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws `rows × cols` i.i.d. CN(0, 1) entries.
pub(crate) fn complex_gaussian(rng: &mut impl Rng, rows: usize, cols: usize) -> CMatrix {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    // Row-major fill keeps the draw order independent of ndarray internals.
    let mut m = CMatrix::zeros((rows, cols));
    for z in m.iter_mut() {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *z = Complex64::new(re * scale, im * scale);
    }
    m
}

/// Rayleigh-fading channel: i.i.d. circularly-symmetric complex Gaussian
/// entries with unit variance.
pub fn generate_channel(config: &SystemConfig, seed: u64) -> ChannelMatrix {
    let mut rng = rng_for(seed, STREAM_CHANNEL);
    ChannelMatrix(complex_gaussian(&mut rng, config.n_tx, config.n_users))
}

pub fn generate_reliability(
    config: &SystemConfig,
    seed: u64,
    scheme: &ReliabilityScheme,
) -> Result<ReliabilityMatrix> {
    match scheme {
        ReliabilityScheme::PerAntennaUniform => {
            let mut rng = rng_for(seed, STREAM_RELIABILITY);
            let per_antenna: Vec<f64> = (0..config.n_tx).map(|_| rng.gen::<f64>()).collect();
            ReliabilityMatrix::from_per_antenna(&per_antenna, config.n_users)
        }
        ReliabilityScheme::FromFile(path) => read_reliability_csv(path, config.n_tx, config.n_users),
    }
}

/// Reads a headerless reliability CSV. Lines starting with `#` are skipped.
pub fn read_reliability_csv(
    path: &Path,
    n_tx: usize,
    n_users: usize,
) -> Result<ReliabilityMatrix> {
    let file_err = |reason: String| Error::ReliabilityFile {
        path: path.to_path_buf(),
        reason,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| file_err(e.to_string()))?;

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| file_err(e.to_string()))?;
        let row = record
            .iter()
            .map(|field| {
                field
                    .parse::<f64>()
                    .map_err(|_| file_err(format!("row {}: `{field}` is not a number", line + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(bad) = row.iter().find(|b| !(0.0..=1.0).contains(*b)) {
            return Err(file_err(format!("row {}: value {bad} outside [0, 1]", line + 1)));
        }
        rows.push(row);
    }

    if rows.len() != n_tx {
        return Err(file_err(format!("expected {n_tx} rows, found {}", rows.len())));
    }
    let width = rows[0].len();
    if width != 1 && width != n_users {
        return Err(file_err(format!(
            "expected 1 or {n_users} columns, found {width}"
        )));
    }
    if let Some(i) = rows.iter().position(|r| r.len() != width) {
        return Err(file_err(format!("row {} has {} columns, expected {width}", i + 1, rows[i].len())));
    }

    let beta = Array2::from_shape_fn((n_tx, n_users), |(i, j)| {
        if width == 1 {
            rows[i][0]
        } else {
            rows[i][j]
        }
    });
    ReliabilityMatrix::new(beta).map_err(|e| file_err(e.to_string()))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    n_tx: Option<usize>,
    n_users: Option<usize>,
    bandwidth_hz: Option<f64>,
    power_budget: Option<f64>,
    noise_variance: Option<f64>,
    min_rate_bps: Option<Vec<f64>>,
    fairness_weights: Option<Vec<f64>>,
    reliability: Option<RawReliability>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawReliability {
    scheme: String,
    path: Option<PathBuf>,
}

/// A parsed config file: the physical scenario plus the reliability source.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub system: SystemConfig,
    pub reliability: ReliabilityScheme,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            system: SystemConfig::reference_default(),
            reliability: ReliabilityScheme::default(),
        }
    }
}

/// Loads a JSON scenario file. Missing keys take the default scenario
/// values; unknown keys are rejected. A relative `reliability.path` is
/// resolved against the config file's directory.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let raw: RawConfig = serde_json::from_str(&text).map_err(|source| Error::ConfigParse {
        path: path.to_path_buf(),
        source,
    })?;

    let n_tx = raw.n_tx.unwrap_or(64);
    let n_users = raw.n_users.unwrap_or(4);
    let system = SystemConfig {
        n_tx,
        n_users,
        bandwidth_hz: raw.bandwidth_hz.unwrap_or(DEFAULT_BANDWIDTH_HZ),
        power_budget: raw.power_budget.unwrap_or(DEFAULT_POWER_BUDGET),
        noise_variance: raw.noise_variance.unwrap_or(DEFAULT_NOISE_VARIANCE),
        min_rate_bps: raw
            .min_rate_bps
            .unwrap_or_else(|| vec![DEFAULT_MIN_RATE_BPS; n_users]),
        fairness_weights: raw.fairness_weights.unwrap_or_else(|| vec![1.0; n_users]),
    };
    system.validate()?;

    let reliability = match raw.reliability {
        None => ReliabilityScheme::PerAntennaUniform,
        Some(r) => match r.scheme.as_str() {
            "per_antenna_uniform" => ReliabilityScheme::PerAntennaUniform,
            "from_file" => {
                let file = r.path.ok_or_else(|| {
                    Error::invalid("reliability.path", "required when scheme is from_file")
                })?;
                let file = if file.is_relative() {
                    path.parent().unwrap_or(Path::new(".")).join(file)
                } else {
                    file
                };
                ReliabilityScheme::FromFile(file)
            }
            other => {
                return Err(Error::invalid(
                    "reliability.scheme",
                    format!("unknown scheme `{other}`"),
                ))
            }
        },
    };

    Ok(Scenario {
        system,
        reliability,
    })
}

pub fn load_config(path: &Path) -> Result<SystemConfig> {
    load_scenario(path).map(|s| s.system)
}
