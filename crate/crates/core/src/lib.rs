//! Reliability-aware selective beamforming for large multi-user MIMO
//! downlinks.
//!
//! The solver maximises a fairness-weighted sum of log-rates minus an ℓ1
//! penalty that is heavier on unhealthy antenna connections, subject to a
//! total power budget and per-user minimum rates. It alternates backtracking
//! proximal-gradient ascent on the beamformer with projected dual ascent on
//! the constraint multipliers.
//!
//! Modules, bottom up:
//!
//! - [`model`]: scenario config, matrix types, seeded generators
//! - [`objective`]: SINR, rates, Lagrangian smooth part and gradient
//! - [`prox`]: weighted ℓ1 penalty and complex soft thresholding
//! - [`solver`]: the primal/dual iteration
//! - [`metrics`]: SE, Ri, RL, BMD, PW and cross-run aggregation
//! - [`oracle`]: finite-difference and brute-force cross-checks
//! - [`harness`]: seeded sweeps and their CSV/JSON outputs
//! - [`cli`]: the `beamsculpt` command line

pub mod cli;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod objective;
pub mod oracle;
pub mod par;
pub mod prox;
pub mod solver;

pub use error::{Error, Result};
pub use model::{
    BeamformingMatrix, ChannelMatrix, CMatrix, ReliabilityMatrix, ReliabilityScheme, SystemConfig,
};
pub use objective::DualState;
pub use prox::PenaltyParams;
pub use solver::{solve, SolveResult, SolverParams};
