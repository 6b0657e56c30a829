//! Max-min transmit covariance design over per-user MAC regions.
//!
//! Every stream `d` of a [`Transmission`] gets a Gaussian input with
//! covariance `K_d`. User `k` jointly decodes its intended streams `S_k`
//! while treating the remaining visible streams `S̄_k` as noise, so a common
//! rate `R` is achievable iff for every nonempty `𝔅 ⊆ S_k`
//!
//! ```text
//! |𝔅|·R ≤ log2|N0 I + H_k (Σ_𝔅 K + Σ_S̄ K) H_kᴴ| − log2|Q_k|,
//! Q_k = N0 I + H_k Σ_S̄ K H_kᴴ.
//! ```
//!
//! The concave-minus-concave right-hand side is handled by successive convex
//! approximation: `log2|Q_k|` is replaced by its tangent at the current
//! point, and each convex subproblem is solved by projected gradient ascent
//! on a log-sum-exp smoothing of the minimum.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{complex_gaussian, user_stream, ChannelSet};
use crate::linalg::{hermitian_eigen, hermitize, inverse, log2_det_hpd, project_psd_trace, trace_product_re, trace_re, CMatrix, LN2};
use crate::model::{combinations, Transmission};
use crate::scheduling::CodewordIndex;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CovError {
    #[error("user {user} must decode {size} messages; MAC regions above 20 are not enumerated")]
    RegionTooLarge { user: usize, size: usize },
    #[error("covariance solver failed: {0}")]
    SolverFailed(String),
    #[error("transmission carries no streams")]
    EmptyTransmission,
    #[error("target set of {omega} users cannot hold codewords of {size}")]
    BadTargetSet { omega: usize, size: usize },
}

/// Codewords a user decodes jointly, and those it treats as noise.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacRegion {
    pub user: usize,
    /// `S_k`: codewords containing the user.
    pub intended: Vec<CodewordIndex>,
    /// `S̄_k`: the other codewords of the target set.
    pub interfering: Vec<CodewordIndex>,
    /// Every nonempty subset of `intended`, as index lists, lexicographic by
    /// size then position.
    pub subsets: Vec<Vec<usize>>,
}

/// MAC region of user `k` for full multicast over `users` with gain `t`.
pub fn mac_region(users: &[usize], t: usize, k: usize) -> Result<MacRegion, CovError> {
    if users.len() < t + 1 {
        return Err(CovError::BadTargetSet { omega: users.len(), size: t + 1 });
    }
    let mut sorted = users.to_vec();
    sorted.sort_unstable();
    let all: Vec<CodewordIndex> = combinations(&sorted, t + 1).into_iter().map(CodewordIndex::new).collect();
    let (intended, interfering): (Vec<_>, Vec<_>) = all.into_iter().partition(|c| c.contains(k));
    let subsets = nonempty_subsets(k, intended.len())?;
    Ok(MacRegion { user: k, intended, interfering, subsets })
}

fn nonempty_subsets(user: usize, m: usize) -> Result<Vec<Vec<usize>>, CovError> {
    if m > 20 {
        return Err(CovError::RegionTooLarge { user, size: m });
    }
    let idx: Vec<usize> = (0..m).collect();
    Ok((1..=m).flat_map(|r| combinations(&idx, r)).collect())
}

/// One covariance per stream of the transmission.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSet {
    pub mats: Vec<CMatrix>,
}

impl CovarianceSet {
    pub fn total_power(&self) -> f64 {
        self.mats.iter().map(trace_re).sum()
    }

    /// Text form: one line per stream, `L` then the lower triangle
    /// row by row as `re im` pairs.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for k in &self.mats {
            let n = k.nrows();
            out.push_str(&n.to_string());
            for r in 0..n {
                for col in 0..=r {
                    out.push_str(&format!(" {:e} {:e}", k[(r, col)].re, k[(r, col)].im));
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, String> {
        let mut mats = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let mut it = line.split_whitespace();
            let n: usize = it.next().ok_or("missing size")?.parse().map_err(|e| format!("size: {e}"))?;
            let vals = it.map(|v| v.parse::<f64>().map_err(|e| format!("entry: {e}"))).collect::<Result<Vec<_>, _>>()?;
            if vals.len() != n * (n + 1) {
                return Err(format!("expected {} values, got {}", n * (n + 1), vals.len()));
            }
            let mut k = CMatrix::zeros(n, n);
            let mut i = 0;
            for r in 0..n {
                for col in 0..=r {
                    let z = crate::linalg::c(vals[i], vals[i + 1]);
                    k[(r, col)] = z;
                    k[(col, r)] = z.conj();
                    i += 2;
                }
            }
            mats.push(k);
        }
        Ok(CovarianceSet { mats })
    }
}

/// One `(k, 𝔅)` rate constraint.
#[derive(Debug, Clone)]
struct Constraint {
    user: usize,
    subset: Vec<usize>,
}

#[derive(Debug, Clone)]
struct UserRegion {
    h: CMatrix,
    interferers: Vec<usize>,
}

/// Problem data shared by all SCA steps.
#[derive(Debug, Clone)]
pub struct CovProblem {
    users: Vec<UserRegion>,
    /// Intended streams of each user, in the order of `users`.
    intended: Vec<Vec<usize>>,
    constraints: Vec<Constraint>,
    streams: usize,
    l: usize,
    p_t: f64,
    n0: f64,
}

impl CovProblem {
    pub fn new(channels: &ChannelSet, tx: &Transmission, p_t: f64, n0: f64) -> Result<Self, CovError> {
        if tx.streams.is_empty() {
            return Err(CovError::EmptyTransmission);
        }
        let mut users = Vec::new();
        let mut intended_all = Vec::new();
        let mut constraints = Vec::new();
        for &k in &tx.users {
            let intended = tx.intended_for(k);
            if intended.is_empty() {
                continue;
            }
            let pos = users.len();
            for subset in nonempty_subsets(k, intended.len())? {
                constraints.push(Constraint { user: pos, subset: subset.iter().map(|&i| intended[i]).collect() });
            }
            users.push(UserRegion { h: channels.h(k).clone(), interferers: tx.interferers_of(k) });
            intended_all.push(intended);
        }
        let l = channels.h(tx.users[0]).ncols();
        Ok(CovProblem { users, intended: intended_all, constraints, streams: tx.streams.len(), l, p_t, n0 })
    }

    fn received(&self, user: &UserRegion, k: &[CMatrix], streams: &[usize]) -> CMatrix {
        let g = user.h.nrows();
        let mut sum = CMatrix::zeros(self.l, self.l);
        for &d in streams {
            sum += &k[d];
        }
        CMatrix::identity(g, g).scale(self.n0) + &user.h * sum * user.h.adjoint()
    }

    /// Exact `R` and the per-constraint values.
    fn exact(&self, k: &[CMatrix]) -> (f64, Vec<f64>) {
        let noise_logdet: Vec<f64> = self
            .users
            .iter()
            .map(|u| log2_det_hpd(&self.received(u, k, &u.interferers)))
            .collect();
        let values: Vec<f64> = self
            .constraints
            .iter()
            .map(|c| {
                let u = &self.users[c.user];
                let mut all = c.subset.clone();
                all.extend(&u.interferers);
                (log2_det_hpd(&self.received(u, k, &all)) - noise_logdet[c.user]) / c.subset.len() as f64
            })
            .collect();
        let r = values.iter().copied().fold(f64::INFINITY, f64::min);
        (r, values)
    }

    pub fn rate(&self, k: &CovarianceSet) -> f64 {
        self.exact(&k.mats).0
    }
}

/// Tangent data of `log2|Q_k|` at the linearization point.
#[derive(Debug, Clone)]
struct Linearization {
    logdet: Vec<f64>,
    /// `H_kᴴ Q̄_k⁻¹ H_k / ln 2`.
    slope: Vec<CMatrix>,
    /// `tr(Q̄_k⁻¹ H_k Σ_S̄ K̄ H_kᴴ) / ln 2`.
    offset: Vec<f64>,
}

impl CovProblem {
    fn linearize(&self, k: &[CMatrix]) -> Linearization {
        let mut logdet = Vec::new();
        let mut slope = Vec::new();
        let mut offset = Vec::new();
        for u in &self.users {
            let q = self.received(u, k, &u.interferers);
            let q_inv = inverse(&q).expect("noise-regularized matrix is invertible");
            let s = hermitize(&(u.h.adjoint() * q_inv * &u.h)).scale(1.0 / LN2);
            let mut sum = CMatrix::zeros(self.l, self.l);
            for &d in &u.interferers {
                sum += &k[d];
            }
            offset.push(trace_product_re(&s, &sum));
            logdet.push(log2_det_hpd(&q));
            slope.push(s);
        }
        Linearization { logdet, slope, offset }
    }

    /// Per user: `N0 I + Σ_{d ∈ S̄_k} H_k K_d H_kᴴ` and the blocks
    /// `H_k K_d H_kᴴ` of its intended streams, keyed by stream.
    fn user_blocks(&self, k: &[CMatrix]) -> Vec<(CMatrix, Vec<(usize, CMatrix)>)> {
        self.users
            .iter()
            .enumerate()
            .map(|(i, u)| {
                let g = u.h.nrows();
                let ha = u.h.adjoint();
                let mut base = CMatrix::identity(g, g).scale(self.n0);
                for &d in &u.interferers {
                    base += &u.h * &k[d] * &ha;
                }
                let intended = self.intended[i].iter().map(|&d| (d, &u.h * &k[d] * &ha)).collect();
                (base, intended)
            })
            .collect()
    }

    /// `log2|Q̄_k| + tr(slope·(Σ K − Σ K̄))` for every user.
    fn tangent_terms(&self, lin: &Linearization, k: &[CMatrix]) -> Vec<f64> {
        self.users
            .iter()
            .enumerate()
            .map(|(i, u)| {
                let lin_sum: f64 = u.interferers.iter().map(|&d| trace_product_re(&lin.slope[i], &k[d])).sum();
                lin.logdet[i] + lin_sum - lin.offset[i]
            })
            .collect()
    }

    fn constraint_matrix(blocks: &(CMatrix, Vec<(usize, CMatrix)>), subset: &[usize]) -> CMatrix {
        let mut m = blocks.0.clone();
        for (d, b) in &blocks.1 {
            if subset.contains(d) {
                m += b;
            }
        }
        m
    }

    /// Surrogate constraint values; equal to the exact ones at the
    /// linearization point and below them elsewhere.
    fn surrogate_values(&self, lin: &Linearization, k: &[CMatrix]) -> Vec<f64> {
        let blocks = self.user_blocks(k);
        let tangent = self.tangent_terms(lin, k);
        self.constraints
            .iter()
            .map(|c| {
                let m = Self::constraint_matrix(&blocks[c.user], &c.subset);
                (log2_det_hpd(&m) - tangent[c.user]) / c.subset.len() as f64
            })
            .collect()
    }

    /// Smoothed surrogate `Φ_τ` and its gradient with respect to each `K_d`.
    fn smoothed(&self, lin: &Linearization, k: &[CMatrix], tau: f64) -> (f64, Vec<CMatrix>) {
        let blocks = self.user_blocks(k);
        let tangent = self.tangent_terms(lin, k);
        let mats: Vec<CMatrix> = self.constraints.iter().map(|c| Self::constraint_matrix(&blocks[c.user], &c.subset)).collect();
        let values: Vec<f64> = self
            .constraints
            .iter()
            .zip(&mats)
            .map(|(c, m)| (log2_det_hpd(m) - tangent[c.user]) / c.subset.len() as f64)
            .collect();
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let z: f64 = values.iter().map(|v| (-tau * (v - min)).exp()).sum();
        let phi = min - z.ln() / tau;

        // weighted inverses accumulated per user: over all constraints (seen
        // by every interferer) and per intended stream
        let mut total: Vec<CMatrix> = self.users.iter().map(|u| CMatrix::zeros(u.h.nrows(), u.h.nrows())).collect();
        let mut per_stream: Vec<Vec<CMatrix>> = self
            .users
            .iter()
            .enumerate()
            .map(|(i, u)| vec![CMatrix::zeros(u.h.nrows(), u.h.nrows()); self.intended[i].len()])
            .collect();
        let mut slope_weight = vec![0.0; self.users.len()];
        for ((c, v), m) in self.constraints.iter().zip(&values).zip(&mats) {
            let pi = (-tau * (v - min)).exp() / z;
            if pi < 1e-300 {
                continue;
            }
            let weight = pi / c.subset.len() as f64;
            let m_inv = inverse(m).expect("noise-regularized matrix is invertible").scale(weight);
            total[c.user] += &m_inv;
            for (j, d) in self.intended[c.user].iter().enumerate() {
                if c.subset.contains(d) {
                    per_stream[c.user][j] += &m_inv;
                }
            }
            slope_weight[c.user] += weight;
        }

        let mut grad = vec![CMatrix::zeros(self.l, self.l); self.streams];
        for (i, u) in self.users.iter().enumerate() {
            if slope_weight[i] == 0.0 {
                continue;
            }
            let ha = u.h.adjoint();
            let shared = hermitize(&(&ha * &total[i] * &u.h)).scale(1.0 / LN2) - lin.slope[i].scale(slope_weight[i]);
            for &d in &u.interferers {
                grad[d] += &shared;
            }
            for (j, &d) in self.intended[i].iter().enumerate() {
                grad[d] += hermitize(&(&ha * &per_stream[i][j] * &u.h)).scale(1.0 / LN2);
            }
        }
        (phi, grad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CovInit {
    /// `P_T / (D·L) · I` for each of the `D` streams.
    ScaledIdentity,
    /// Random feasible point at full power.
    Random(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovOptions {
    pub init: CovInit,
    pub tol: f64,
    pub max_iter: usize,
    /// Gradient iterations per smoothing temperature.
    pub inner_iter: usize,
}

impl Default for CovOptions {
    fn default() -> Self {
        CovOptions { init: CovInit::ScaledIdentity, tol: 1e-5, max_iter: 200, inner_iter: 100 }
    }
}

pub fn initial_covariances(problem: &CovProblem, init: &CovInit) -> CovarianceSet {
    let (l, d, p) = (problem.l, problem.streams, problem.p_t);
    match init {
        CovInit::ScaledIdentity => CovarianceSet { mats: vec![CMatrix::identity(l, l).scale(p / (d * l) as f64); d] },
        CovInit::Random(seed) => {
            let mats: Vec<CMatrix> = (0..d)
                .map(|i| {
                    let mut rng = user_stream(*seed, 1_000_000 + i);
                    let a = CMatrix::from_fn(l, l, |_, _| complex_gaussian(&mut rng));
                    hermitize(&(&a * a.adjoint()))
                })
                .collect();
            let total: f64 = mats.iter().map(trace_re).sum();
            CovarianceSet { mats: mats.into_iter().map(|m| m.scale(p / total)).collect() }
        }
    }
}

/// Solves one convexified subproblem around `current`. Returns the new
/// covariances and their exact rate `R`, which is never below the rate of
/// `current`.
pub fn sca_cov_step(problem: &CovProblem, current: &CovarianceSet, opts: &CovOptions) -> Result<(CovarianceSet, f64), CovError> {
    let lin = problem.linearize(&current.mats);
    let start_value = problem.surrogate_values(&lin, &current.mats).into_iter().fold(f64::INFINITY, f64::min);
    let mut best = current.mats.clone();
    let mut best_value = start_value;
    let mut k = current.mats.clone();
    let mut step = 0.1 * problem.p_t;
    let single = problem.constraints.len() == 1;
    let temperatures: &[f64] = if single { &[1.0] } else { &[10.0, 31.6, 100.0, 316.0, 1000.0] };
    let iters = if single { opts.inner_iter * 5 } else { opts.inner_iter };
    for &tau in temperatures {
        let (mut phi, mut grad) = problem.smoothed(&lin, &k, tau);
        for _ in 0..iters {
            let gnorm = grad.iter().map(|g| g.norm_squared()).sum::<f64>().sqrt();
            if !gnorm.is_finite() {
                return Err(CovError::SolverFailed("non-finite gradient".into()));
            }
            if gnorm < 1e-14 {
                break;
            }
            let mut accepted = false;
            while step > 1e-14 * problem.p_t {
                let moved: Vec<CMatrix> = k.iter().zip(&grad).map(|(x, g)| x + g.scale(step / gnorm)).collect();
                let trial = project_psd_trace(&moved, problem.p_t);
                let (phi_t, grad_t) = problem.smoothed(&lin, &trial, tau);
                if phi_t > phi {
                    let gain = phi_t - phi;
                    k = trial;
                    phi = phi_t;
                    grad = grad_t;
                    step *= 1.5;
                    let value = problem.surrogate_values(&lin, &k).into_iter().fold(f64::INFINITY, f64::min);
                    if value > best_value {
                        best_value = value;
                        best = k.clone();
                    }
                    accepted = gain > 1e-9 * phi.abs().max(1e-12);
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        step = step.max(1e-3 * problem.p_t);
    }
    let set = CovarianceSet { mats: best };
    let r = problem.rate(&set);
    if !r.is_finite() {
        return Err(CovError::SolverFailed("non-finite rate".into()));
    }
    Ok((set, r))
}

#[derive(Debug, Clone)]
pub struct CovSolution {
    pub covariances: CovarianceSet,
    pub rate: f64,
    /// Exact `R` after every SCA step, starting with the initial point.
    pub history: Vec<f64>,
    pub converged: bool,
}

/// SCA iterations from the configured start.
pub fn optimize_covariances(
    channels: &ChannelSet,
    tx: &Transmission,
    p_t: f64,
    n0: f64,
    opts: &CovOptions,
) -> Result<CovSolution, CovError> {
    let problem = CovProblem::new(channels, tx, p_t, n0)?;
    let start = initial_covariances(&problem, &opts.init);
    optimize_covariances_from(&problem, start, opts)
}

/// SCA iterations from a caller-supplied feasible start.
pub fn optimize_covariances_from(problem: &CovProblem, start: CovarianceSet, opts: &CovOptions) -> Result<CovSolution, CovError> {
    let mut current = CovarianceSet { mats: project_psd_trace(&start.mats, problem.p_t) };
    let mut rate = problem.rate(&current);
    let mut history = vec![rate];
    let mut converged = false;
    for _ in 0..opts.max_iter {
        let (next, r) = sca_cov_step(problem, &current, opts)?;
        let previous = rate;
        if r >= rate {
            current = next;
            rate = r;
        }
        history.push(rate);
        if (rate - previous).abs() < opts.tol {
            converged = true;
            break;
        }
    }
    Ok(CovSolution { covariances: current, rate, history, converged })
}

/// Brute-force check of every `(k, 𝔅)` constraint at rate `r` with `1e-6`
/// slack, plus the power budget and positive semidefiniteness.
pub fn verify_mac_feasibility(channels: &ChannelSet, tx: &Transmission, k: &CovarianceSet, r: f64, p_t: f64, n0: f64) -> bool {
    if k.total_power() > p_t * (1.0 + 1e-9) {
        return false;
    }
    for m in &k.mats {
        if (m - m.adjoint()).norm() > 1e-10 * (1.0 + m.norm()) {
            return false;
        }
        let (vals, _) = hermitian_eigen(m);
        if vals.last().copied().unwrap_or(0.0) < -1e-10 {
            return false;
        }
    }
    let l = k.mats[0].nrows();
    for &user in &tx.users {
        let intended = tx.intended_for(user);
        let others = tx.interferers_of(user);
        let h = channels.h(user);
        let g = h.nrows();
        let mut noise_cov = CMatrix::zeros(l, l);
        for &d in &others {
            noise_cov += &k.mats[d];
        }
        let q = CMatrix::identity(g, g).scale(n0) + h * &noise_cov * h.adjoint();
        let base = log2_det_hpd(&q);
        for size in 1..=intended.len() {
            for subset in combinations(&intended, size) {
                let mut sum = noise_cov.clone();
                for &d in &subset {
                    sum += &k.mats[d];
                }
                let m = CMatrix::identity(g, g).scale(n0) + h * sum * h.adjoint();
                if size as f64 * r > log2_det_hpd(&m) - base + 1e-6 {
                    return false;
                }
            }
        }
    }
    true
}

/// Point-to-point MIMO capacity `max log2|I + H K Hᴴ/N0|` under `tr K ≤ P`,
/// by water-filling over the eigenmodes of `HᴴH`.
pub fn water_filling_capacity(h: &CMatrix, p_t: f64, n0: f64) -> f64 {
    let (gains, _) = hermitian_eigen(&(h.adjoint() * h));
    let gains: Vec<f64> = gains.into_iter().filter(|&g| g > 1e-14).collect();
    if gains.is_empty() {
        return 0.0;
    }
    // water level ν with Σ (ν − N0/g)^+ = P
    let floors: Vec<f64> = gains.iter().map(|g| n0 / g).collect();
    let mut active = floors.len();
    let level = loop {
        let nu = (p_t + floors[..active].iter().sum::<f64>()) / active as f64;
        if nu > floors[active - 1] || active == 1 {
            break nu;
        }
        active -= 1;
    };
    floors[..active].iter().map(|f| (level / f).log2()).sum()
}

/// Covariances induced by beamformers: `K_d = w_d w_dᴴ`.
pub fn from_beamformers(w: &[crate::linalg::CVector]) -> CovarianceSet {
    CovarianceSet { mats: w.iter().map(|x| x * x.adjoint()).collect() }
}
