//! Symmetric-rate accounting and DoF slope estimation.
//!
//! A file is split into `Θ` subpackets. A transmission at rate `R` (bits per
//! channel use, per subpacket-sized stream) lasts `T = 1/(Θ R)`; summing
//! over every transmission of a delivery round gives `T_total`, and the
//! symmetric rate is `K / T_total` files per unit time.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::binomial;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RateError {
    #[error("slope estimation needs at least 2 points, got {0}")]
    InsufficientPoints(usize),
    #[error("theta must be at least 1")]
    BadTheta,
    #[error("rate {0} is negative or not finite")]
    BadRate(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub snr_db: f64,
    /// Files per unit time.
    pub r_sym: f64,
    /// Bits per channel use.
    pub per_transmission_rate: f64,
    pub theta: u64,
    pub transmissions_per_round: u64,
}

/// `K / Σ_i 1/(Θ R_i)`; zero if any rate is zero.
pub fn symmetric_rate(rates: &[f64], theta: u64, k: usize) -> Result<f64, RateError> {
    if theta == 0 {
        return Err(RateError::BadTheta);
    }
    let mut total_time = 0.0;
    for &r in rates {
        if !(r >= 0.0) || !r.is_finite() {
            return Err(RateError::BadRate(r));
        }
        if r == 0.0 {
            return Ok(0.0);
        }
        total_time += 1.0 / (theta as f64 * r);
    }
    if total_time == 0.0 {
        return Ok(0.0);
    }
    Ok(k as f64 / total_time)
}

/// Symmetric rate when `rates` are the transmissions of one representative
/// target set and the round repeats that pattern over `subsets` target sets.
pub fn symmetric_rate_representative(rates: &[f64], theta: u64, k: usize, subsets: u64) -> Result<f64, RateError> {
    Ok(symmetric_rate(rates, theta, k)? / subsets as f64)
}

/// Least-squares slope of `sum_rate` against `log2(SNR)`.
pub fn dof_slope(points: &[(f64, f64)]) -> Result<f64, RateError> {
    if points.len() < 2 {
        return Err(RateError::InsufficientPoints(points.len()));
    }
    let xs: Vec<f64> = points.iter().map(|(db, _)| db / 10.0 * 10f64.log2()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(points).map(|(x, p)| (x - mx) * (p.1 - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(RateError::InsufficientPoints(1));
    }
    Ok(sxy / sxx)
}

/// [`dof_slope`] restricted to points at or above 40 dB.
pub fn high_snr_slope(points: &[(f64, f64)]) -> Result<f64, RateError> {
    let high: Vec<(f64, f64)> = points.iter().copied().filter(|p| p.0 >= 40.0).collect();
    dof_slope(&high)
}

/// Subpacketization and per-round transmission count of a delivery scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundAccounting {
    pub theta: u64,
    /// Transmissions per target set.
    pub per_subset: u64,
    /// Number of target sets `C(K, Ω)`.
    pub subsets: u64,
}

impl RoundAccounting {
    pub fn transmissions_per_round(&self) -> u64 {
        self.per_subset * self.subsets
    }
}

/// Zero-forcing unicast: `Θ = C(K,t)·β·C(K−t−1, Ω−t−1)`, `C(Ω−1,t)`
/// transmissions per target set.
pub fn unicast_accounting(k: usize, t: usize, omega: usize, beta: usize) -> RoundAccounting {
    RoundAccounting {
        theta: binomial(k, t) * beta as u64 * binomial(k - t - 1, omega - t - 1),
        per_subset: binomial(omega - 1, t),
        subsets: binomial(k, omega),
    }
}

/// Multicast: `Θ = C(K,t)·δ·C(K−t−1, Ω−t−1)`, `δS₀/η` transmissions per
/// target set.
pub fn multicast_accounting(k: usize, t: usize, omega: usize, delta: usize, s0: usize, eta: usize) -> RoundAccounting {
    RoundAccounting {
        theta: binomial(k, t) * delta as u64 * binomial(k - t - 1, omega - t - 1),
        per_subset: (delta * s0 / eta) as u64,
        subsets: binomial(k, omega),
    }
}
