//! Achievable degrees of freedom for zero-forcing unicast delivery.
//!
//! With `Ω` users per transmission and `β` streams per user, the delivery is
//! interference-free whenever
//!
//! ```text
//! β ≤ min(G, L·C(Ω−1,t) / (1 + (Ω−t−1)·C(Ω−1,t)))
//! ```
//!
//! and the DoF is `Ω·β`. [`dof_max`] searches all `Ω ∈ [t+1, K]`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{binomial, NetworkConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DofError {
    #[error("omega = {omega} is below t+1 = {min}")]
    BadOmega { omega: usize, min: usize },
    #[error("no omega in [t+1, K] admits a single decodable stream")]
    NoFeasiblePoint,
}

/// One row of the DoF frontier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub omega: usize,
    pub beta_max: usize,
    pub dof: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DofSolution {
    pub omega_star: usize,
    pub beta_star: usize,
    pub dof: usize,
    pub frontier: Vec<FrontierPoint>,
}

/// Largest per-user stream count decodable with `omega` users per
/// transmission. Zero means no stream fits at this `omega`.
pub fn beta_max(omega: usize, t: usize, l: usize, g: usize) -> Result<usize, DofError> {
    if omega < t + 1 {
        return Err(DofError::BadOmega { omega, min: t + 1 });
    }
    let s = binomial(omega - 1, t) as u128;
    let num = l as u128 * s;
    let den = 1 + (omega - t - 1) as u128 * s;
    Ok((g as u128).min(num / den) as usize)
}

/// Exhaustive `(Ω, β)` search. Ties go to the smallest `β`, then the
/// smallest `Ω`.
pub fn dof_max(config: &NetworkConfig) -> Result<DofSolution, DofError> {
    let (t, l, g) = (config.t, config.l, config.g);
    let mut frontier = Vec::with_capacity(config.k - t);
    for omega in t + 1..=config.k {
        let b = beta_max(omega, t, l, g)?;
        frontier.push(FrontierPoint { omega, beta_max: b, dof: omega * b });
    }
    let best = frontier
        .iter()
        .filter(|p| p.beta_max > 0)
        .min_by(|a, b| {
            b.dof
                .cmp(&a.dof)
                .then(a.beta_max.cmp(&b.beta_max))
                .then(a.omega.cmp(&b.omega))
        })
        .copied()
        .ok_or(DofError::NoFeasiblePoint)?;
    Ok(DofSolution {
        omega_star: best.omega,
        beta_star: best.beta_max,
        dof: best.dof,
        frontier,
    })
}

/// Single-shot DoF `G·t + L` of the earlier scheme that requires `G | L`.
/// `None` when that integer constraint fails.
pub fn dof_reference_gtl(l: usize, g: usize, t: usize) -> Option<usize> {
    if g == 0 || !l.is_multiple_of(g) {
        return None;
    }
    Some(g * t + l)
}
