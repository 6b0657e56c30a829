//! Transmit and receive beamformer design.
//!
//! Two families live here:
//!
//! - Zero-forcing unicast delivery: [`unicast_plan`] picks which subpackets
//!   go into each of the `C(Ω−1,t)` transmissions of a target set,
//!   [`rx_bases`] fixes each user's receive subspace, and
//!   [`zf_tx_beamformers`] places every stream in the null space of the
//!   users it would otherwise disturb.
//! - Linear max-min design for an arbitrary [`Transmission`] layout:
//!   MMSE receivers alternate with a convexified transmit problem in which
//!   each rate constraint `t ≤ log2(1/ε)` is replaced by its tangent bound
//!   `ε ≤ ψ̄ − ᾱt`. The transmit step is solved either by the KKT fixed
//!   point with a dual subgradient update or by a generic projected
//!   gradient method on the log-sum-exp smoothed objective.
//!
//! Rates are in bits per channel use. Within a transmission, stream rates
//! add up per rate group and the objective is `min_g r_g / n_g`, where
//! `n_g` is the number of streams in group `g`.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::ChannelSet;
use crate::linalg::{condition_number, hermitian_eigen, inverse, null_space, project_simplex, svd_sorted, CMatrix, CVector, LN2};
use crate::model::{combinations, PacketIndex, StreamLabel, StreamSpec, SubpacketId, Transmission};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BeamformError {
    #[error("no undelivered subpacket left for user {user}, packet {packet}")]
    ExhaustedSubpackets { user: usize, packet: String },
    #[error("beta = {beta} exceeds the {limit} available dimensions")]
    BetaTooLarge { beta: usize, limit: usize },
    #[error("null space of dimension {nullity} cannot host {needed} streams for user {user}")]
    NullSpaceTooSmall { user: usize, nullity: usize, needed: usize },
    #[error("effective channel of user {user} has condition number {cond:e}")]
    SingularEffectiveChannel { user: usize, cond: f64 },
    #[error("optimizer produced a non-finite rate")]
    Diverged,
    #[error("transmission carries no streams")]
    EmptyTransmission,
    #[error("channel missing for user {0}")]
    MissingChannel(usize),
}

// ---------------------------------------------------------------------------
// Zero-forcing unicast delivery
// ---------------------------------------------------------------------------

/// Next unused subpacket number per `(packet, user)`, shared across target
/// sets when a full delivery round is planned.
#[derive(Debug, Clone, Default)]
pub struct SubpacketLedger {
    next: HashMap<(PacketIndex, usize), usize>,
    capacity: Option<usize>,
}

impl SubpacketLedger {
    /// Ledger with at most `capacity` subpackets per `(packet, user)`.
    pub fn with_capacity(capacity: usize) -> Self {
        SubpacketLedger { next: HashMap::new(), capacity: Some(capacity) }
    }

    fn take(&mut self, packet: &PacketIndex, user: usize) -> Result<usize, BeamformError> {
        let slot = self.next.entry((packet.clone(), user)).or_insert(1);
        if let Some(cap) = self.capacity {
            if *slot > cap {
                return Err(BeamformError::ExhaustedSubpackets { user, packet: packet.to_string() });
            }
        }
        let q = *slot;
        *slot += 1;
        Ok(q)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnicastPlan {
    pub users: Vec<usize>,
    pub beta: usize,
    pub t: usize,
    /// Per transmission, per user: the `β` subpackets it receives.
    pub transmissions: Vec<BTreeMap<usize, Vec<SubpacketId>>>,
}

/// Subpacket selection for one target set, numbering subpackets from 1.
pub fn unicast_plan(users: &[usize], beta: usize, t: usize) -> Result<UnicastPlan, BeamformError> {
    unicast_plan_with_ledger(users, beta, t, &mut SubpacketLedger::default())
}

/// Subpacket selection drawing fresh subpacket numbers from `ledger`.
pub fn unicast_plan_with_ledger(
    users: &[usize],
    beta: usize,
    t: usize,
    ledger: &mut SubpacketLedger,
) -> Result<UnicastPlan, BeamformError> {
    let mut users = users.to_vec();
    users.sort_unstable();
    let mut pools: BTreeMap<usize, BTreeMap<PacketIndex, Vec<usize>>> = BTreeMap::new();
    for &k in &users {
        let others: Vec<usize> = users.iter().copied().filter(|&u| u != k).collect();
        let mut per_packet = BTreeMap::new();
        for members in combinations(&others, t) {
            let packet = PacketIndex::new(members);
            let mut qs = Vec::with_capacity(beta);
            for _ in 0..beta {
                qs.push(ledger.take(&packet, k)?);
            }
            per_packet.insert(packet, qs);
        }
        pools.insert(k, per_packet);
    }

    let s = combinations(&users[..users.len() - 1], t).len();
    let mut transmissions = Vec::with_capacity(s);
    for _ in 0..s {
        let mut chosen = BTreeMap::new();
        for &k in &users {
            let pool = pools.get_mut(&k).expect("pool exists");
            let mut picked = Vec::with_capacity(beta);
            for _ in 0..beta {
                // largest pool, lexicographically smallest packet on ties
                let (packet, qs) = pool
                    .iter_mut()
                    .fold(None::<(&PacketIndex, &mut Vec<usize>)>, |best, cand| match best {
                        Some(b) if b.1.len() >= cand.1.len() => Some(b),
                        _ => Some(cand),
                    })
                    .filter(|(_, qs)| !qs.is_empty())
                    .ok_or(BeamformError::ExhaustedSubpackets { user: k, packet: "any".into() })?;
                let q = qs.remove(0);
                picked.push(SubpacketId { user: k, packet: packet.clone(), sub: q });
            }
            chosen.insert(k, picked);
        }
        transmissions.push(chosen);
    }
    Ok(UnicastPlan { users, beta, t, transmissions })
}

impl UnicastPlan {
    /// Stream layout of transmission `s`; each stream is its own rate group.
    pub fn layout(&self, s: usize) -> Transmission {
        let mut streams = Vec::new();
        for (&k, subs) in &self.transmissions[s] {
            for id in subs {
                streams.push(StreamSpec {
                    group: streams.len(),
                    label: StreamLabel::Unicast(id.clone()),
                    intended: vec![k],
                });
            }
        }
        Transmission { users: self.users.clone(), streams }
    }
}

/// `U_k` = the `β` dominant left singular vectors of `H_k`.
pub fn rx_bases(channels: &ChannelSet, users: &[usize], beta: usize) -> Result<BTreeMap<usize, CMatrix>, BeamformError> {
    let mut out = BTreeMap::new();
    for &k in users {
        let h = channels.matrices.get(&k).ok_or(BeamformError::MissingChannel(k))?;
        let limit = h.nrows().min(h.ncols());
        if beta > limit {
            return Err(BeamformError::BetaTooLarge { beta, limit });
        }
        let (u, _, _) = svd_sorted(h);
        out.insert(k, u.columns(0, beta).into_owned());
    }
    Ok(out)
}

/// Relative singular-value threshold for null-space membership.
pub const NULL_TOL: f64 = 1e-10;

/// Stacked `U_{k'}ᴴ H_{k'}` of the users that neither want nor cache stream
/// `d`.
pub fn equivalent_interference_channel(
    channels: &ChannelSet,
    tx: &Transmission,
    rx: &BTreeMap<usize, CMatrix>,
    d: usize,
) -> CMatrix {
    let l = channels.h(tx.users[0]).ncols();
    let blocks: Vec<CMatrix> = tx
        .users
        .iter()
        .filter(|&&k| !tx.streams[d].intended.contains(&k) && !tx.cancels(k, d))
        .map(|&k| rx[&k].adjoint() * channels.h(k))
        .collect();
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = CMatrix::zeros(rows, l);
    let mut r = 0;
    for b in blocks {
        out.view_mut((r, 0), (b.nrows(), l)).copy_from(&b);
        r += b.nrows();
    }
    out
}

/// Zero-forcing transmit beamformers with equal power `P_T / D` per stream.
///
/// Streams of the same user and packet share one null space and receive
/// orthonormal directions within it, chosen to best align with the
/// intended user's receive subspace.
pub fn zf_tx_beamformers(
    channels: &ChannelSet,
    tx: &Transmission,
    rx: &BTreeMap<usize, CMatrix>,
    p_t: f64,
) -> Result<Vec<CVector>, BeamformError> {
    if tx.streams.is_empty() {
        return Err(BeamformError::EmptyTransmission);
    }
    let l = channels.h(tx.users[0]).ncols();
    let amplitude = (p_t / tx.streams.len() as f64).sqrt();
    let mut w = vec![CVector::zeros(l); tx.streams.len()];

    // streams sharing (user, packet) share a null space
    let mut classes: BTreeMap<(Vec<usize>, Vec<usize>), Vec<usize>> = BTreeMap::new();
    for (d, s) in tx.streams.iter().enumerate() {
        let key = match &s.label {
            StreamLabel::Unicast(id) => (s.intended.clone(), id.packet.members().to_vec()),
            StreamLabel::Multicast { codeword, .. } => (s.intended.clone(), codeword.members().to_vec()),
        };
        classes.entry(key).or_default().push(d);
    }

    for ((intended, _), members) in classes {
        let hbar = equivalent_interference_channel(channels, tx, rx, members[0]);
        let basis = null_space(&hbar, l, NULL_TOL);
        if basis.ncols() < members.len() {
            return Err(BeamformError::NullSpaceTooSmall {
                user: intended[0],
                nullity: basis.ncols(),
                needed: members.len(),
            });
        }
        // effective channel towards the intended users inside the null space
        let mut rows: Vec<CMatrix> = Vec::new();
        for k in &intended {
            rows.push(rx[k].adjoint() * channels.h(*k) * &basis);
        }
        let total: usize = rows.iter().map(|r| r.nrows()).sum();
        let mut eff = CMatrix::zeros(total, basis.ncols());
        let mut r = 0;
        for b in rows {
            eff.view_mut((r, 0), (b.nrows(), b.ncols())).copy_from(&b);
            r += b.nrows();
        }
        let (_, _, v) = svd_sorted(&eff);
        for (i, &d) in members.iter().enumerate() {
            let dir = &basis * v.column(i);
            w[d] = dir.scale(amplitude / dir.norm());
        }
    }
    Ok(w)
}

/// Outcome of zero-forcing reception of one stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZfStreamOutcome {
    /// Interference power over signal power after equalization.
    pub residual: f64,
    /// Post-equalization SINR.
    pub sinr: f64,
}

/// Simulates reception at every user: cache-regenerable streams are removed,
/// the rest is projected onto `U_k` and the `β×β` effective channel of the
/// intended streams is inverted. Indexed by stream.
pub fn unicast_decode(
    channels: &ChannelSet,
    tx: &Transmission,
    w: &[CVector],
    rx: &BTreeMap<usize, CMatrix>,
    n0: f64,
) -> Result<Vec<ZfStreamOutcome>, BeamformError> {
    let mut out = vec![ZfStreamOutcome { residual: 0.0, sinr: 0.0 }; tx.streams.len()];
    for &k in &tx.users {
        let mine = tx.intended_for(k);
        if mine.is_empty() {
            continue;
        }
        let others = tx.interferers_of(k);
        let proj = rx[&k].adjoint() * channels.h(k);
        let d_mat = CMatrix::from_fn(proj.nrows(), mine.len(), |r, col| (proj.row(r) * &w[mine[col]])[(0, 0)]);
        if d_mat.nrows() != d_mat.ncols() {
            return Err(BeamformError::BetaTooLarge { beta: mine.len(), limit: d_mat.nrows() });
        }
        let cond = condition_number(&d_mat);
        if !(cond <= 1e12) {
            return Err(BeamformError::SingularEffectiveChannel { user: k, cond });
        }
        let d_inv = inverse(&d_mat).ok_or(BeamformError::SingularEffectiveChannel { user: k, cond })?;
        let e_mat = CMatrix::from_fn(proj.nrows(), others.len(), |r, col| (proj.row(r) * &w[others[col]])[(0, 0)]);
        let leak = &d_inv * e_mat;
        for (j, &d) in mine.iter().enumerate() {
            let interference = leak.row(j).norm_squared();
            let noise = n0 * d_inv.row(j).norm_squared();
            out[d] = ZfStreamOutcome { residual: interference, sinr: 1.0 / (noise + interference) };
        }
    }
    Ok(out)
}

/// Largest interference-to-signal ratio over all decoded streams.
pub fn unicast_decode_residual(
    channels: &ChannelSet,
    tx: &Transmission,
    w: &[CVector],
    rx: &BTreeMap<usize, CMatrix>,
) -> Result<f64, BeamformError> {
    let outcomes = unicast_decode(channels, tx, w, rx, 1.0)?;
    Ok(outcomes.iter().map(|o| o.residual).fold(0.0, f64::max))
}

// ---------------------------------------------------------------------------
// MMSE receivers, SINR and MSE
// ---------------------------------------------------------------------------

/// Per `(user, stream)` receive vectors.
pub type Receivers = BTreeMap<(usize, usize), CVector>;

/// `C_k = N0 I + Σ_{d visible at k} H_k w_d w_dᴴ H_kᴴ`.
pub fn received_covariance(h: &CMatrix, w: &[CVector], visible: &[usize], n0: f64) -> CMatrix {
    let g = h.nrows();
    let mut c = CMatrix::identity(g, g).scale(n0);
    for &d in visible {
        let hw = h * &w[d];
        c += &hw * hw.adjoint();
    }
    c
}

/// `u_{k,d} = C_k⁻¹ H_k w_d` for every intended `(k, d)`.
pub fn mmse_receivers(channels: &ChannelSet, tx: &Transmission, w: &[CVector], n0: f64) -> Receivers {
    let mut out = Receivers::new();
    for &k in &tx.users {
        let h = channels.h(k);
        let c = received_covariance(h, w, &tx.visible_at(k), n0);
        let c_inv = inverse(&c).expect("noise-regularized covariance is invertible");
        for d in tx.intended_for(k) {
            out.insert((k, d), &c_inv * (h * &w[d]));
        }
    }
    out
}

/// SINR of stream `d` at user `k` with receive vector `u`; interference is
/// summed over every other stream visible at `k`.
pub fn stream_sinr(channels: &ChannelSet, tx: &Transmission, w: &[CVector], u: &CVector, n0: f64, k: usize, d: usize) -> f64 {
    let h = channels.h(k);
    let signal = u.dotc(&(h * &w[d])).norm_sqr();
    let mut interference = 0.0;
    for dp in tx.visible_at(k) {
        if dp != d {
            interference += u.dotc(&(h * &w[dp])).norm_sqr();
        }
    }
    signal / (interference + n0 * u.norm_squared())
}

/// `ε = |1 − uᴴH_k w_d|² + Σ_{d'≠d} |uᴴH_k w_{d'}|² + N0‖u‖²`.
pub fn stream_mse(channels: &ChannelSet, tx: &Transmission, w: &[CVector], u: &CVector, n0: f64, k: usize, d: usize) -> f64 {
    let h = channels.h(k);
    let mut eps = n0 * u.norm_squared();
    for dp in tx.visible_at(k) {
        let a = u.dotc(&(h * &w[dp]));
        eps += if dp == d { (num_complex::Complex64::new(1.0, 0.0) - a).norm_sqr() } else { a.norm_sqr() };
    }
    eps
}

/// SINR achieved by the MMSE receiver, `gᴴ(C_k − g gᴴ)⁻¹g` with `g = H_k w_d`.
pub fn mmse_sinr(channels: &ChannelSet, tx: &Transmission, w: &[CVector], n0: f64, k: usize, d: usize) -> f64 {
    let h = channels.h(k);
    let visible: Vec<usize> = tx.visible_at(k).into_iter().filter(|&x| x != d).collect();
    let c = received_covariance(h, w, &visible, n0);
    let g = h * &w[d];
    let c_inv = inverse(&c).expect("noise-regularized covariance is invertible");
    g.dotc(&(&c_inv * &g)).re.max(0.0)
}

/// Rates of a transmission under MMSE reception.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkRates {
    /// Per stream: minimum over its intended users of `log2(1 + γ)`.
    pub stream: Vec<f64>,
    /// Per rate group: sum of its stream rates.
    pub group: Vec<f64>,
    /// `min_g group[g] / n_g`.
    pub r_c: f64,
}

impl LinkRates {
    pub fn sum_rate(&self) -> f64 {
        self.stream.iter().sum()
    }
}

fn combine_rates(tx: &Transmission, stream: Vec<f64>) -> LinkRates {
    let sizes = tx.group_sizes();
    let mut group = vec![0.0; sizes.len()];
    for (d, s) in tx.streams.iter().enumerate() {
        group[s.group] += stream[d];
    }
    let r_c = group
        .iter()
        .zip(&sizes)
        .map(|(r, &n)| r / n as f64)
        .fold(f64::INFINITY, f64::min);
    LinkRates { stream, group, r_c }
}

pub fn mmse_rates(channels: &ChannelSet, tx: &Transmission, w: &[CVector], n0: f64) -> LinkRates {
    let stream = (0..tx.streams.len())
        .map(|d| {
            tx.streams[d]
                .intended
                .iter()
                .map(|&k| (1.0 + mmse_sinr(channels, tx, w, n0, k, d)).log2())
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    combine_rates(tx, stream)
}

/// Rates of a zero-forcing unicast transmission.
pub fn zf_rates(outcomes: &[ZfStreamOutcome], tx: &Transmission) -> LinkRates {
    combine_rates(tx, outcomes.iter().map(|o| (1.0 + o.sinr).log2()).collect())
}

// ---------------------------------------------------------------------------
// Convexified transmit problem
// ---------------------------------------------------------------------------

/// One MSE constraint `(k, d)` with receiver fixed: `ε(W)` depends on `W`
/// only through `gᴴw` with `g = H_kᴴ u`.
#[derive(Debug, Clone)]
struct MsePair {
    stream: usize,
    g: CVector,
    noise: f64,
    alpha: f64,
    psi: f64,
    /// Streams visible at this pair's user.
    visible: Vec<usize>,
}

/// Transmit subproblem at fixed receivers, linearized around the current
/// beamformers.
#[derive(Debug, Clone)]
pub struct TransmitProblem {
    pairs: Vec<MsePair>,
    /// Pair indices intended for each stream.
    stream_pairs: Vec<Vec<usize>>,
    /// Pair indices whose user sees each stream.
    seen_by: Vec<Vec<usize>>,
    groups: Vec<Vec<usize>>,
    group_of: Vec<usize>,
    p_t: f64,
    l: usize,
}

/// Surrogate evaluation of a beamformer set.
#[derive(Debug, Clone)]
struct SurrogateValue {
    t: Vec<f64>,
    stream: Vec<f64>,
    group: Vec<f64>,
    r_c: f64,
}

impl TransmitProblem {
    /// Linearizes around `w` with receivers `u`.
    pub fn new(channels: &ChannelSet, tx: &Transmission, w: &[CVector], u: &Receivers, n0: f64, p_t: f64) -> Self {
        let d_count = tx.streams.len();
        let l = w[0].len();
        let mut pairs = Vec::new();
        let mut stream_pairs = vec![Vec::new(); d_count];
        let mut seen_by = vec![Vec::new(); d_count];
        for &k in &tx.users {
            let visible = tx.visible_at(k);
            for d in tx.intended_for(k) {
                let uk = &u[&(k, d)];
                let g = channels.h(k).adjoint() * uk;
                let mut pair = MsePair { stream: d, g, noise: n0 * uk.norm_squared(), alpha: 0.0, psi: 0.0, visible: visible.clone() };
                let eps = mse_of(&pair, w);
                let t_bar = -eps.log2();
                pair.alpha = LN2 * eps;
                pair.psi = eps * (1.0 + t_bar * LN2);
                let idx = pairs.len();
                stream_pairs[d].push(idx);
                for &dp in &visible {
                    seen_by[dp].push(idx);
                }
                pairs.push(pair);
            }
        }
        let group_count = tx.group_count();
        let mut groups = vec![Vec::new(); group_count];
        let mut group_of = vec![0; d_count];
        for (d, s) in tx.streams.iter().enumerate() {
            groups[s.group].push(d);
            group_of[d] = s.group;
        }
        TransmitProblem { pairs, stream_pairs, seen_by, groups, group_of, p_t, l }
    }

    fn surrogate(&self, w: &[CVector]) -> SurrogateValue {
        let t: Vec<f64> = self.pairs.iter().map(|p| (p.psi - mse_of(p, w)) / p.alpha).collect();
        self.assemble(t)
    }

    /// Objective with the exact `log2(1/ε)` in place of the tangent bound.
    fn fixed_receiver_rate(&self, w: &[CVector]) -> f64 {
        let t: Vec<f64> = self.pairs.iter().map(|p| -mse_of(p, w).log2()).collect();
        self.assemble(t).r_c
    }

    fn assemble(&self, t: Vec<f64>) -> SurrogateValue {
        let stream: Vec<f64> = self
            .stream_pairs
            .iter()
            .map(|ps| ps.iter().map(|&p| t[p]).fold(f64::INFINITY, f64::min))
            .collect();
        let group: Vec<f64> = self.groups.iter().map(|ds| ds.iter().map(|&d| stream[d]).sum()).collect();
        let r_c = group
            .iter()
            .zip(&self.groups)
            .map(|(r, ds)| r / ds.len() as f64)
            .fold(f64::INFINITY, f64::min);
        SurrogateValue { t, stream, group, r_c }
    }
}

fn mse_of(pair: &MsePair, w: &[CVector]) -> f64 {
    let mut eps = pair.noise;
    for &dp in &pair.visible {
        let a = pair.g.dotc(&w[dp]);
        eps += if dp == pair.stream { (num_complex::Complex64::new(1.0, 0.0) - a).norm_sqr() } else { a.norm_sqr() };
    }
    eps
}

fn total_power(w: &[CVector]) -> f64 {
    w.iter().map(|x| x.norm_squared()).sum()
}

fn scale_to_power(w: &mut [CVector], p_t: f64) {
    let p = total_power(w);
    if p > 0.0 {
        let s = (p_t / p).sqrt();
        for x in w.iter_mut() {
            *x *= num_complex::Complex64::new(s, 0.0);
        }
    }
}

/// Dual and epigraph state of the KKT transmit iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktState {
    /// Multipliers of the `t ≤ (ψ̄ − ε)/ᾱ` constraints, one per `(k, d)`.
    pub v: Vec<f64>,
    /// MSE weights `λ = v / (ε ln 2)`.
    pub lambda: Vec<f64>,
    /// Power multiplier.
    pub mu: f64,
    /// Dual mass per rate group, summing to the number of groups.
    pub zeta: Vec<f64>,
    /// Share of its stream's mass held by each `(k, d)`; sums to 1 per stream.
    pub theta: Vec<f64>,
    /// Epigraph values `t_{k,d}` at the current iterate.
    pub t: Vec<f64>,
    pub stream_rates: Vec<f64>,
    pub r_c: f64,
    pub iteration: usize,
    pub step: f64,
}

impl KktState {
    /// Uniform multipliers: every group carries unit mass, split evenly over
    /// its streams and then over each stream's receivers.
    pub fn initial(problem: &TransmitProblem, w: &[CVector], step: f64) -> Self {
        let mut theta = vec![0.0; problem.pairs.len()];
        for ps in &problem.stream_pairs {
            for &p in ps {
                theta[p] = 1.0 / ps.len() as f64;
            }
        }
        let zeta = vec![1.0; problem.groups.len()];
        let value = problem.surrogate(w);
        KktState {
            v: problem.pair_multipliers(&zeta, &theta),
            lambda: vec![0.0; theta.len()],
            zeta,
            theta,
            mu: 0.0,
            t: value.t,
            stream_rates: value.stream,
            r_c: value.r_c,
            iteration: 0,
            step,
        }
    }
}

impl TransmitProblem {
    /// `v_{k,d} = ζ_g / n_g · θ_{k,d}` for stream `d` in group `g`.
    fn pair_multipliers(&self, zeta: &[f64], theta: &[f64]) -> Vec<f64> {
        self.pairs
            .iter()
            .enumerate()
            .map(|(p, pair)| {
                let g = self.group_of[pair.stream];
                zeta[g] / self.groups[g].len() as f64 * theta[p]
            })
            .collect()
    }
}

/// Closed-form `w_d = (A_d + μI)⁻¹ b_d`, with `μ ≥ 0` found by bisection so
/// that the total power meets `P_T` whenever the unconstrained solution
/// exceeds it.
fn kkt_beamformers(problem: &TransmitProblem, lambda: &[f64]) -> (Vec<CVector>, f64) {
    let l = problem.l;
    let d_count = problem.stream_pairs.len();
    let mut decomps = Vec::with_capacity(d_count);
    for d in 0..d_count {
        let mut a = CMatrix::zeros(l, l);
        for &p in &problem.seen_by[d] {
            let g = &problem.pairs[p].g;
            a += (g * g.adjoint()).scale(lambda[p]);
        }
        let mut b = CVector::zeros(l);
        for &p in &problem.stream_pairs[d] {
            b += problem.pairs[p].g.scale(lambda[p]);
        }
        let (vals, vecs) = hermitian_eigen(&a);
        let coeffs = vecs.adjoint() * b;
        decomps.push((vals, vecs, coeffs));
    }
    let power = |mu: f64| -> f64 {
        let mut total = 0.0;
        for (vals, _, coeffs) in &decomps {
            for (i, &lam) in vals.iter().enumerate() {
                let denom = lam.max(0.0) + mu;
                let num = coeffs[i].norm_sqr();
                if num > 0.0 {
                    total += if denom > 0.0 { num / (denom * denom) } else { f64::INFINITY };
                }
            }
        }
        total
    };
    let scale_ref = decomps.iter().flat_map(|(v, _, _)| v.iter().copied()).fold(0.0, f64::max);
    let floor = 1e-12 * scale_ref.max(f64::MIN_POSITIVE);
    let mu = if power(floor) <= problem.p_t {
        floor
    } else {
        let b_norm: f64 = decomps.iter().map(|(_, _, c)| c.norm_squared()).sum();
        let mut hi = (b_norm / problem.p_t).sqrt().max(floor);
        while power(hi) > problem.p_t {
            hi *= 2.0;
        }
        let mut lo = floor;
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            if power(mid) > problem.p_t {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi / lo < 1.0 + 1e-13 {
                break;
            }
        }
        hi
    };
    let w = decomps
        .iter()
        .map(|(vals, vecs, coeffs)| {
            let scaled = CVector::from_fn(vals.len(), |i, _| coeffs[i] / (vals[i].max(0.0) + mu));
            vecs * scaled
        })
        .collect();
    (w, mu)
}

/// One inner sweep of the KKT transmit iteration: `λ` from the current MSEs,
/// closed-form `w`, power multiplier, then a projected subgradient step on
/// the rate multipliers.
pub fn kkt_transmit_update(problem: &TransmitProblem, state: &KktState) -> Result<(Vec<CVector>, KktState), BeamformError> {
    let mut next = state.clone();
    next.iteration += 1;
    for (p, pair) in problem.pairs.iter().enumerate() {
        // ᾱ = ε̄ ln 2 at the linearization point
        next.lambda[p] = state.v[p] / pair.alpha;
    }
    let (w_new, mu) = kkt_beamformers(problem, &next.lambda);
    next.mu = mu;
    let value = problem.surrogate(&w_new);
    if !value.r_c.is_finite() {
        return Err(BeamformError::Diverged);
    }

    // normalized projected subgradient steps on the group masses and on the
    // per-stream shares
    let step = state.step;
    let group_grad: Vec<f64> = (0..problem.groups.len())
        .map(|g| value.r_c - value.group[g] / problem.groups[g].len() as f64)
        .collect();
    let scale = group_grad.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale > 0.0 {
        let moved: Vec<f64> = state.zeta.iter().zip(&group_grad).map(|(z, gr)| z + step * gr / scale).collect();
        next.zeta = project_simplex(&moved, problem.groups.len() as f64);
    }
    let share_grad: Vec<f64> = problem.pairs.iter().enumerate().map(|(p, pair)| value.stream[pair.stream] - value.t[p]).collect();
    let scale = share_grad.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale > 0.0 {
        for ps in &problem.stream_pairs {
            let moved: Vec<f64> = ps.iter().map(|&p| state.theta[p] + step * share_grad[p] / scale).collect();
            for (&p, th) in ps.iter().zip(project_simplex(&moved, 1.0)) {
                next.theta[p] = th;
            }
        }
    }
    next.v = problem.pair_multipliers(&next.zeta, &next.theta);
    next.t = value.t;
    next.stream_rates = value.stream;
    next.r_c = value.r_c;
    Ok((w_new, next))
}

/// Which method solves the convexified transmit problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransmitSolver {
    Kkt,
    Generic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearOptions {
    pub solver: TransmitSolver,
    pub tol_outer: f64,
    pub max_outer: usize,
    pub tol_inner: f64,
    pub max_inner: usize,
    /// Initial normalized subgradient step, halved whenever the iteration
    /// stalls.
    pub step: f64,
}

impl Default for LinearOptions {
    fn default() -> Self {
        LinearOptions { solver: TransmitSolver::Kkt, tol_outer: 1e-5, max_outer: 200, tol_inner: 1e-6, max_inner: 500, step: 0.1 }
    }
}

fn solve_kkt(
    problem: &TransmitProblem,
    w0: &[CVector],
    opts: &LinearOptions,
    warm: &mut Option<(Vec<f64>, Vec<f64>)>,
) -> Result<Vec<CVector>, BeamformError> {
    let mut best_w = w0.to_vec();
    let mut best = problem.surrogate(w0).r_c;
    let mut state = KktState::initial(problem, w0, opts.step);
    if let Some((zeta, theta)) = warm.as_ref().filter(|(z, th)| z.len() == state.zeta.len() && th.len() == state.theta.len()) {
        state.zeta = zeta.clone();
        state.theta = theta.clone();
        state.v = problem.pair_multipliers(zeta, theta);
    }
    let mut stale = 0;
    let mut run_best = f64::NEG_INFINITY;
    for _ in 0..opts.max_inner {
        let (w_new, next) = kkt_transmit_update(problem, &state)?;
        if next.r_c > run_best + opts.tol_inner {
            stale = 0;
            run_best = next.r_c;
        } else {
            stale += 1;
        }
        if next.r_c > best {
            best = next.r_c;
            best_w = w_new;
        }
        state = next;
        if stale >= 10 {
            // oscillating around the dual optimum: restart the schedule at half the step
            state.step *= 0.5;
            if state.step < opts.step * 1e-3 {
                break;
            }
            state.iteration = 0;
            run_best = f64::NEG_INFINITY;
            stale = 0;
        }
    }
    *warm = Some((state.zeta, state.theta));
    Ok(best_w)
}

/// Smoothed objective `Φ_τ` and its gradient `∂Φ_τ/∂w*`.
fn smoothed(problem: &TransmitProblem, w: &[CVector], tau: f64) -> (f64, Vec<CVector>) {
    let value = problem.surrogate(w);
    // soft-min inside each stream
    let mut stream_soft = vec![0.0; problem.stream_pairs.len()];
    let mut pair_weight = vec![0.0; problem.pairs.len()];
    for (d, ps) in problem.stream_pairs.iter().enumerate() {
        let m = ps.iter().map(|&p| value.t[p]).fold(f64::INFINITY, f64::min);
        let z: f64 = ps.iter().map(|&p| (-tau * (value.t[p] - m)).exp()).sum();
        stream_soft[d] = m - z.ln() / tau;
        for &p in ps {
            pair_weight[p] = (-tau * (value.t[p] - m)).exp() / z;
        }
    }
    let group_vals: Vec<f64> = problem
        .groups
        .iter()
        .map(|ds| ds.iter().map(|&d| stream_soft[d]).sum::<f64>() / ds.len() as f64)
        .collect();
    let m = group_vals.iter().copied().fold(f64::INFINITY, f64::min);
    let z: f64 = group_vals.iter().map(|&v| (-tau * (v - m)).exp()).sum();
    let phi = m - z.ln() / tau;
    let mut grad = vec![CVector::zeros(problem.l); w.len()];
    for (p, pair) in problem.pairs.iter().enumerate() {
        let g = problem.group_of[pair.stream];
        let pi = (-tau * (group_vals[g] - m)).exp() / z;
        let coef = pi / problem.groups[g].len() as f64 * pair_weight[p] / pair.alpha;
        if coef == 0.0 {
            continue;
        }
        for &dp in &pair.visible {
            let a = pair.g.dotc(&w[dp]);
            // −∂ε/∂w* contribution
            let factor = if dp == pair.stream { num_complex::Complex64::new(1.0, 0.0) - a } else { -a };
            grad[dp] += pair.g.scale(coef) * factor;
        }
    }
    (phi, grad)
}

fn project_ball(w: &mut [CVector], p_t: f64) {
    if total_power(w) > p_t {
        scale_to_power(w, p_t);
    }
}

fn solve_generic(problem: &TransmitProblem, w0: &[CVector], opts: &LinearOptions) -> Vec<CVector> {
    let mut best_w = w0.to_vec();
    let mut best = problem.surrogate(w0).r_c;
    let mut w = w0.to_vec();
    let budget = opts.max_inner.max(1);
    let radius = problem.p_t.sqrt();
    let mut step_len = 0.1 * radius;
    for tau in [10.0, 31.6, 100.0, 316.0, 1000.0] {
        let (mut phi, mut grad) = smoothed(problem, &w, tau);
        for _ in 0..budget {
            let gnorm = total_power(&grad).sqrt();
            if gnorm < 1e-14 {
                break;
            }
            let mut accepted = false;
            while step_len > 1e-12 * radius {
                let mut trial: Vec<CVector> = w.iter().zip(&grad).map(|(x, g)| x + g.scale(step_len / gnorm)).collect();
                project_ball(&mut trial, problem.p_t);
                let (phi_t, grad_t) = smoothed(problem, &trial, tau);
                if phi_t > phi {
                    let gain = phi_t - phi;
                    w = trial;
                    phi = phi_t;
                    grad = grad_t;
                    step_len *= 1.5;
                    accepted = true;
                    let exact = problem.surrogate(&w).r_c;
                    if exact > best {
                        best = exact;
                        best_w = w.clone();
                    }
                    if gain < opts.tol_inner * 1e-3 {
                        accepted = false;
                    }
                    break;
                }
                step_len *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        step_len = (0.01 * radius).max(step_len);
    }
    best_w
}

/// Iterate record for convergence plots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub r_c: f64,
    pub power: f64,
}

pub fn trace_to_text(trace: &[TraceRow]) -> String {
    let mut out = String::from("iteration,r_c,power\n");
    for row in trace {
        out.push_str(&format!("{},{:e},{:e}\n", row.iteration, row.r_c, row.power));
    }
    out
}

#[derive(Debug, Clone)]
pub struct LinearSolution {
    pub w: Vec<CVector>,
    pub receivers: Receivers,
    pub rates: LinkRates,
    /// `r_c` after every outer iteration, starting with the initial point.
    pub history: Vec<f64>,
    pub trace: Vec<TraceRow>,
    pub converged: bool,
}

impl LinearSolution {
    pub fn r_c(&self) -> f64 {
        self.rates.r_c
    }
}

/// `index`-th right singular vector (cyclically) of the stacked channels of
/// `users`, scaled to `amplitude`.
fn matched_direction(channels: &ChannelSet, users: &[usize], index: usize, amplitude: f64) -> CVector {
    let l = channels.h(users[0]).ncols();
    let g = channels.h(users[0]).nrows();
    let mut stacked = CMatrix::zeros(g * users.len(), l);
    for (i, &k) in users.iter().enumerate() {
        stacked.view_mut((i * g, 0), (g, l)).copy_from(channels.h(k));
    }
    let (_, sigma, v) = svd_sorted(&stacked);
    if sigma.first().copied().unwrap_or(0.0) == 0.0 {
        let mut e = CVector::zeros(l);
        e[index % l] = num_complex::Complex64::new(amplitude, 0.0);
        return e;
    }
    v.column(index % l).scale(amplitude)
}

/// Deterministic feasible starting point at equal power: streams for the
/// same users take successive singular directions of their stacked channel.
pub fn initial_beamformers(channels: &ChannelSet, tx: &Transmission, p_t: f64) -> Vec<CVector> {
    let amplitude = (p_t / tx.streams.len() as f64).sqrt();
    let mut seen: HashMap<Vec<usize>, usize> = HashMap::new();
    tx.streams
        .iter()
        .map(|s| {
            let index = seen.entry(s.intended.clone()).or_insert(0);
            let w = matched_direction(channels, &s.intended, *index, amplitude);
            *index += 1;
            w
        })
        .collect()
}

/// Max-min linear design: alternates MMSE receivers with the convexified
/// transmit problem. The recorded `r_c` sequence is nondecreasing.
pub fn optimize_linear(
    channels: &ChannelSet,
    tx: &Transmission,
    p_t: f64,
    n0: f64,
    opts: &LinearOptions,
) -> Result<LinearSolution, BeamformError> {
    optimize_linear_from(channels, tx, initial_beamformers(channels, tx, p_t), p_t, n0, opts)
}

/// Same as [`optimize_linear`] from a caller-supplied feasible start.
pub fn optimize_linear_from(
    channels: &ChannelSet,
    tx: &Transmission,
    w0: Vec<CVector>,
    p_t: f64,
    n0: f64,
    opts: &LinearOptions,
) -> Result<LinearSolution, BeamformError> {
    if tx.streams.is_empty() {
        return Err(BeamformError::EmptyTransmission);
    }
    for &k in &tx.users {
        if !channels.matrices.contains_key(&k) {
            return Err(BeamformError::MissingChannel(k));
        }
    }
    let mut w = w0;
    project_ball(&mut w, p_t);
    let mut rates = mmse_rates(channels, tx, &w, n0);
    if !rates.r_c.is_finite() {
        return Err(BeamformError::Diverged);
    }
    let mut history = vec![rates.r_c];
    let mut trace = vec![TraceRow { iteration: 0, r_c: rates.r_c, power: total_power(&w) }];
    let mut converged = false;
    let mut duals: Option<(Vec<f64>, Vec<f64>)> = None;

    for iteration in 1..=opts.max_outer {
        let u = mmse_receivers(channels, tx, &w, n0);
        let problem = TransmitProblem::new(channels, tx, &w, &u, n0, p_t);
        let mut candidate = match opts.solver {
            TransmitSolver::Kkt => solve_kkt(&problem, &w, opts, &mut duals)?,
            TransmitSolver::Generic => solve_generic(&problem, &w, opts),
        };
        // with MMSE reception, raising the total power never lowers any SINR
        scale_to_power(&mut candidate, p_t);
        let cand_rates = mmse_rates(channels, tx, &candidate, n0);
        if !cand_rates.r_c.is_finite() {
            return Err(BeamformError::Diverged);
        }
        let previous = rates.r_c;
        if cand_rates.r_c >= previous {
            w = candidate;
            rates = cand_rates;
        }
        history.push(rates.r_c);
        trace.push(TraceRow { iteration, r_c: rates.r_c, power: total_power(&w) });
        if (rates.r_c - previous).abs() < opts.tol_outer {
            converged = true;
            break;
        }
    }
    let receivers = mmse_receivers(channels, tx, &w, n0);
    Ok(LinearSolution { w, receivers, rates, history, trace, converged })
}

/// Fixed-receiver objective of the transmit problem, exposed for tests.
pub fn fixed_receiver_rate(problem: &TransmitProblem, w: &[CVector]) -> f64 {
    problem.fixed_receiver_rate(w)
}
