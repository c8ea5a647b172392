//! Reliability-weighted ℓ1 penalty and its proximal operator.
//!
//! Entry `(i, j)` is penalised with weight `ρ_s (1 − β_ij)`, so fully healthy
//! connections are free and failed ones pay the full sparsity weight. The
//! prox is elementwise magnitude shrinkage with threshold
//! `κ_ij = η ρ_s (1 − β_ij)`, which on the real line is the familiar
//! three-branch soft threshold.

use ndarray::Zip;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{BeamformingMatrix, ReliabilityMatrix};

#[derive(Debug, Clone, Copy)]
pub struct PenaltyParams<'a> {
    /// Sparsity promotion weight `ρ_s` (the `γ` of the sweep).
    pub sparsity_weight: f64,
    pub beta: &'a ReliabilityMatrix,
}

impl<'a> PenaltyParams<'a> {
    pub fn new(sparsity_weight: f64, beta: &'a ReliabilityMatrix) -> Result<Self> {
        if !(sparsity_weight.is_finite() && sparsity_weight >= 0.0) {
            return Err(Error::InvalidParam {
                name: "sparsity_weight",
                reason: format!("{sparsity_weight} is not a finite nonnegative number"),
            });
        }
        Ok(PenaltyParams {
            sparsity_weight,
            beta,
        })
    }
}

/// `ρ_s Σ_ij (1 − β_ij) |w_ij|`.
pub fn penalty_value(w: &BeamformingMatrix, params: &PenaltyParams<'_>) -> Result<f64> {
    params.beta.expect_shape(w.dim())?;
    if params.sparsity_weight == 0.0 {
        return Ok(0.0);
    }
    let weighted: f64 = w
        .iter()
        .zip(params.beta.iter())
        .map(|(z, b)| (1.0 - b) * z.norm())
        .sum();
    Ok(params.sparsity_weight * weighted)
}

/// Complex soft threshold: shrinks `|x|` by `kappa`, keeping the phase.
/// Inputs with `|x| <= kappa` map to zero.
#[inline]
pub fn soft_threshold(x: Complex64, kappa: f64) -> Complex64 {
    if kappa == 0.0 {
        return x;
    }
    let mag = x.norm();
    if mag <= kappa {
        return Complex64::new(0.0, 0.0);
    }
    // x − κ·x/|x|; exact `x ∓ κ` for real inputs.
    x - (x / mag) * kappa
}

/// Proximal step of the penalty scaled by `step`.
pub fn prox_step(
    x: &BeamformingMatrix,
    step: f64,
    params: &PenaltyParams<'_>,
) -> Result<BeamformingMatrix> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::InvalidParam {
            name: "step",
            reason: format!("{step} is not a positive number"),
        });
    }
    params.beta.expect_shape(x.dim())?;
    let scale = step * params.sparsity_weight;
    let mut z = (**x).clone();
    if scale > 0.0 {
        Zip::from(&mut z)
            .and(&**params.beta)
            .for_each(|v, b| *v = soft_threshold(*v, scale * (1.0 - b)));
    }
    BeamformingMatrix::new(z)
}
