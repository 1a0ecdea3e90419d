//! Noise-overhead analysis for resources shared over a decoherent fibre.
//!
//! Losing purity costs copies: holding the statistical error fixed while the
//! resource purity drops means sharing N' = N tr(rho^2) / tr(rho'^2) copies
//! instead of N. The routines here evaluate that ratio from the matrices
//! themselves; the closed forms only appear in tests, as oracles.

use crate::states::{fiber_decohere, werner, QState, Result as StateResult, StateError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NoiseError {
    #[error(transparent)]
    State(#[from] StateError),
    #[error("{name} grid must not be empty")]
    EmptyGrid { name: &'static str },
}

/// A Werner resource crossing a fibre with phase spread `dphi`, against a
/// noiseless budget of `n_base` copies.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FiberScenario {
    pub z: f64,
    pub dphi: f64,
    pub n_base: u64,
}

impl FiberScenario {
    pub fn new(z: f64, dphi: f64, n_base: u64) -> StateResult<Self> {
        if !(0.0..=1.0).contains(&z) {
            return Err(StateError::OutOfRange { name: "z", value: z, range: "[0, 1]" });
        }
        if dphi < 0.0 {
            return Err(StateError::OutOfRange { name: "dphi", value: dphi, range: "[0, inf)" });
        }
        if n_base == 0 {
            return Err(StateError::OutOfRange { name: "n_base", value: 0.0, range: "[1, inf)" });
        }
        Ok(Self { z, dphi, n_base })
    }
}

/// tr(rho^2).
pub fn purity(rho: &QState) -> f64 {
    rho.purity()
}

/// Copies needed through the noisy channel for the same statistical error:
/// N' = N tr(rho_w^2) / tr(rho_w'^2), with both purities computed from the
/// constructed matrices.
pub fn copies_needed(s: &FiberScenario) -> Result<f64, NoiseError> {
    let clean = werner(s.z)?;
    let noisy = fiber_decohere(&clean, s.dphi)?;
    Ok(s.n_base as f64 * clean.purity() / noisy.purity())
}

/// One row of an overhead sweep.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OverheadPoint {
    pub z: f64,
    pub dphi: f64,
    pub purity: f64,
    pub purity_noisy: f64,
    /// N'/N.
    pub ratio: f64,
}

/// Overhead table over a (z, dphi) grid.
pub fn overhead_curve(z_grid: &[f64], dphi_grid: &[f64]) -> Result<Vec<OverheadPoint>, NoiseError> {
    if z_grid.is_empty() {
        return Err(NoiseError::EmptyGrid { name: "z" });
    }
    if dphi_grid.is_empty() {
        return Err(NoiseError::EmptyGrid { name: "dphi" });
    }
    let mut rows = Vec::with_capacity(z_grid.len() * dphi_grid.len());
    for &z in z_grid {
        let clean = werner(z)?;
        for &dphi in dphi_grid {
            let noisy = fiber_decohere(&clean, dphi)?;
            rows.push(OverheadPoint {
                z,
                dphi,
                purity: clean.purity(),
                purity_noisy: noisy.purity(),
                ratio: clean.purity() / noisy.purity(),
            });
        }
    }
    Ok(rows)
}

/// CSV with header `z,dphi,purity,purity_noisy,ratio`.
pub fn overhead_csv(rows: &[OverheadPoint]) -> String {
    let mut out = String::from("z,dphi,purity,purity_noisy,ratio\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.z, r.dphi, r.purity, r.purity_noisy, r.ratio
        ));
    }
    out
}
