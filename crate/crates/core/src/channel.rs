//! Seeded i.i.d. Rayleigh channels.
//!
//! Generator: ChaCha20 (`rand_chacha::ChaCha20Rng`), 256-bit key = the seed
//! as 8 little-endian bytes followed by 24 zero bytes, stream id = user
//! index. For each user the `G×L` entries are drawn in row-major order; each
//! entry consumes two `u64` words `a, b`, mapped to uniforms
//! `u = (a >> 11)·2⁻⁵³`, `v = (b >> 11)·2⁻⁵³`, and then Box–Muller:
//! `ρ = sqrt(−2 ln(1−u))`, `h = sqrt(1/2)·ρ·(cos 2πv + i sin 2πv)`.
//! This gives `CN(0, 1)` entries that any ChaCha20 implementation can
//! reproduce bit-for-bit.

use std::collections::BTreeMap;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{c, CMatrix};
use crate::model::NetworkConfig;

/// Per-user channel matrices of one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub matrices: BTreeMap<usize, CMatrix>,
    pub seed: u64,
    pub snr_db: f64,
}

impl ChannelSet {
    /// Channel of `user`; panics if the user was not sampled.
    pub fn h(&self, user: usize) -> &CMatrix {
        &self.matrices[&user]
    }

    pub fn users(&self) -> Vec<usize> {
        self.matrices.keys().copied().collect()
    }

    /// Text dump: header `seed snr_db users G L`, then one line per user
    /// holding the user id followed by `re im` pairs in row-major order.
    pub fn to_text(&self) -> String {
        let (g, l) = self.matrices.values().next().map(|h| h.shape()).unwrap_or((0, 0));
        let mut out = format!("{} {:e} {} {} {}\n", self.seed, self.snr_db, self.matrices.len(), g, l);
        for (user, h) in &self.matrices {
            out.push_str(&user.to_string());
            for r in 0..g {
                for col in 0..l {
                    let z = h[(r, col)];
                    out.push_str(&format!(" {:e} {:e}", z.re, z.im));
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().ok_or("empty channel dump")?.split_whitespace().collect();
        if header.len() != 5 {
            return Err("channel header needs 5 fields".into());
        }
        let seed: u64 = header[0].parse().map_err(|e| format!("seed: {e}"))?;
        let snr_db: f64 = header[1].parse().map_err(|e| format!("snr: {e}"))?;
        let count: usize = header[2].parse().map_err(|e| format!("users: {e}"))?;
        let g: usize = header[3].parse().map_err(|e| format!("G: {e}"))?;
        let l: usize = header[4].parse().map_err(|e| format!("L: {e}"))?;
        let mut matrices = BTreeMap::new();
        for line in lines.filter(|s| !s.trim().is_empty()) {
            let mut fields = line.split_whitespace();
            let user: usize = fields
                .next()
                .ok_or("missing user id")?
                .parse()
                .map_err(|e| format!("user: {e}"))?;
            let values = fields
                .map(|f| f.parse::<f64>().map_err(|e| format!("entry: {e}")))
                .collect::<Result<Vec<_>, _>>()?;
            if values.len() != 2 * g * l {
                return Err(format!("user {user}: expected {} values, got {}", 2 * g * l, values.len()));
            }
            let h = CMatrix::from_fn(g, l, |r, col| {
                let i = 2 * (r * l + col);
                c(values[i], values[i + 1])
            });
            matrices.insert(user, h);
        }
        if matrices.len() != count {
            return Err(format!("expected {count} users, got {}", matrices.len()));
        }
        Ok(ChannelSet { matrices, seed, snr_db })
    }
}

/// Generator for user `user`'s sub-stream under `seed`.
pub fn user_stream(seed: u64, user: usize) -> ChaCha20Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    let mut rng = ChaCha20Rng::from_seed(key);
    rng.set_stream(user as u64);
    rng
}

fn unit_uniform(rng: &mut ChaCha20Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// One `CN(0, 1)` sample.
pub fn complex_gaussian(rng: &mut ChaCha20Rng) -> num_complex::Complex64 {
    let u = unit_uniform(rng);
    let v = unit_uniform(rng);
    let rho = (-2.0 * (1.0 - u).ln()).sqrt() * std::f64::consts::FRAC_1_SQRT_2;
    let phase = 2.0 * std::f64::consts::PI * v;
    c(rho * phase.cos(), rho * phase.sin())
}

pub fn sample_user_channel(g: usize, l: usize, seed: u64, user: usize) -> CMatrix {
    let mut rng = user_stream(seed, user);
    let mut h = CMatrix::zeros(g, l);
    for r in 0..g {
        for col in 0..l {
            h[(r, col)] = complex_gaussian(&mut rng);
        }
    }
    h
}

/// Draws `H_k` for every user in `users`.
pub fn sample_channels(config: &NetworkConfig, users: &[usize], seed: u64) -> ChannelSet {
    let matrices = users
        .iter()
        .map(|&k| (k, sample_user_channel(config.g, config.l, seed, k)))
        .collect();
    ChannelSet { matrices, seed, snr_db: snr_to_db(snr_linear(config)) }
}

pub fn snr_linear(config: &NetworkConfig) -> f64 {
    config.p_t / config.n0
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn snr_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// Plain serializable copy of a channel matrix, for structured output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRecord {
    pub rows: usize,
    pub cols: usize,
    /// Row-major `(re, im)` pairs.
    pub entries: Vec<(f64, f64)>,
}

impl From<&CMatrix> for MatrixRecord {
    fn from(m: &CMatrix) -> Self {
        let (rows, cols) = m.shape();
        let mut entries = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for col in 0..cols {
                entries.push((m[(r, col)].re, m[(r, col)].im));
            }
        }
        MatrixRecord { rows, cols, entries }
    }
}
