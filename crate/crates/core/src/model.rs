//! Network configuration, cache placement and subpacket bookkeeping.
//!
//! Users, files and packets are 1-based. User `k` requests file `k`
//! (all-distinct demands), and the file size is normalized to one unit.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scheduling::CodewordIndex;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("coded-caching gain mismatch: K*M/N = {k}*{m}/{n} is not the integer t = {t}")]
    IntegerGainViolation { k: usize, m: usize, n: usize, t: usize },
    #[error("need at least t+1 = {needed} users, got K = {k}")]
    TooFewUsers { k: usize, needed: usize },
    #[error("{0} must be positive")]
    NonPositive(&'static str),
    #[error("user {user} is not in 1..={k}")]
    UnknownUser { user: usize, k: usize },
    #[error("omega = {omega} outside [{min}, {max}]")]
    BadOmega { omega: usize, min: usize, max: usize },
    #[error("split factor must be at least 1")]
    BadSplit,
}

/// `C(n, k)`, zero when `k > n`.
pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as u64
}

/// All size-`r` sub-lists of `items`, in lexicographic order of positions.
pub fn combinations<T: Clone>(items: &[T], r: usize) -> Vec<Vec<T>> {
    let n = items.len();
    if r > n {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(binomial(n, r) as usize);
    let mut idx: Vec<usize> = (0..r).collect();
    loop {
        out.push(idx.iter().map(|&i| items[i].clone()).collect());
        // advance the rightmost index that still has room
        let mut i = r;
        while i > 0 && idx[i - 1] == n - r + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        idx[i - 1] += 1;
        for j in i..r {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// A cache-aided MIMO instance `(K, L, G, t, N, M, P_T, N0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Number of users.
    pub k: usize,
    /// Transmit spatial dimensions.
    pub l: usize,
    /// Receive spatial dimensions per user.
    pub g: usize,
    /// Coded-caching gain `K*M/N`.
    pub t: usize,
    /// Library size in files.
    pub n: usize,
    /// Per-user cache size in files.
    pub m: usize,
    /// Transmit power budget (linear).
    pub p_t: f64,
    /// Noise variance (linear).
    pub n0: f64,
}

impl NetworkConfig {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        k: usize,
        l: usize,
        g: usize,
        t: usize,
        n: usize,
        m: usize,
        p_t: f64,
        n0: f64,
    ) -> Result<Self, ModelError> {
        if k == 0 {
            return Err(ModelError::NonPositive("K"));
        }
        if l == 0 {
            return Err(ModelError::NonPositive("L"));
        }
        if g == 0 {
            return Err(ModelError::NonPositive("G"));
        }
        if n == 0 {
            return Err(ModelError::NonPositive("N"));
        }
        if k * m != t * n {
            return Err(ModelError::IntegerGainViolation { k, m, n, t });
        }
        if k < t + 1 {
            return Err(ModelError::TooFewUsers { k, needed: t + 1 });
        }
        if !(p_t > 0.0) || !p_t.is_finite() {
            return Err(ModelError::NonPositive("P_T"));
        }
        if !(n0 > 0.0) || !n0.is_finite() {
            return Err(ModelError::NonPositive("N0"));
        }
        Ok(NetworkConfig { k, l, g, t, n, m, p_t, n0 })
    }

    /// Convenience constructor with `N = K` files, which makes `M = t`.
    pub fn with_gain(k: usize, l: usize, g: usize, t: usize, p_t: f64, n0: f64) -> Result<Self, ModelError> {
        Self::new(k, l, g, t, k, t, p_t, n0)
    }

    pub fn snr(&self) -> f64 {
        self.p_t / self.n0
    }

    /// Same network at a different transmit power.
    pub fn with_power(&self, p_t: f64) -> Result<Self, ModelError> {
        Self::new(self.k, self.l, self.g, self.t, self.n, self.m, p_t, self.n0)
    }

    pub fn check_user(&self, user: usize) -> Result<(), ModelError> {
        if user == 0 || user > self.k {
            return Err(ModelError::UnknownUser { user, k: self.k });
        }
        Ok(())
    }

    pub fn check_omega(&self, omega: usize) -> Result<(), ModelError> {
        if omega < self.t + 1 || omega > self.k {
            return Err(ModelError::BadOmega { omega, min: self.t + 1, max: self.k });
        }
        Ok(())
    }

    pub fn users(&self) -> Vec<usize> {
        (1..=self.k).collect()
    }
}

/// Label `𝒫` of a packet: the sorted set of `t` users caching it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PacketIndex(Vec<usize>);

impl PacketIndex {
    /// Builds a packet index from any user list; sorts and deduplicates.
    pub fn new(members: impl IntoIterator<Item = usize>) -> Self {
        let set: BTreeSet<usize> = members.into_iter().collect();
        PacketIndex(set.into_iter().collect())
    }

    pub fn members(&self) -> &[usize] {
        &self.0
    }

    pub fn contains(&self, user: usize) -> bool {
        self.0.binary_search(&user).is_ok()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for PacketIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, u) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{u}")?;
        }
        write!(f, "}}")
    }
}

/// Subpacket `W^q_{𝒫,k}` of the file requested by `user`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SubpacketId {
    pub user: usize,
    pub packet: PacketIndex,
    /// 1-based subpacket number within `(packet, user)`.
    pub sub: usize,
}

/// All `C(K, t)` packet indices, lexicographic.
pub fn packet_indices(k: usize, t: usize) -> Vec<PacketIndex> {
    let users: Vec<usize> = (1..=k).collect();
    combinations(&users, t).into_iter().map(PacketIndex).collect()
}

/// Packet indices whose packets (of every file) user `user` stores.
pub fn cache_contents(config: &NetworkConfig, user: usize) -> Result<Vec<PacketIndex>, ModelError> {
    config.check_user(user)?;
    if config.t == 0 {
        return Ok(Vec::new());
    }
    Ok(packet_indices(config.k, config.t)
        .into_iter()
        .filter(|p| p.contains(user))
        .collect())
}

/// Delivery strategy, as far as subpacketization is concerned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DeliveryScheme {
    /// Zero-forcing unicast delivery with `beta` streams per user.
    Unicast { beta: usize },
    /// Multicast codewords with `delta` concatenated schedule copies.
    Multicast { delta: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubpacketizationReport {
    pub placement_splits: u64,
    pub delivery_splits: u64,
    /// Total `Θ = placement_splits * delivery_splits`.
    pub theta: u64,
}

pub fn subpacketization(
    config: &NetworkConfig,
    scheme: DeliveryScheme,
    omega: usize,
) -> Result<SubpacketizationReport, ModelError> {
    config.check_omega(omega)?;
    let (k, t) = (config.k, config.t);
    let factor = match scheme {
        DeliveryScheme::Unicast { beta } => beta,
        DeliveryScheme::Multicast { delta } => delta,
    };
    if factor == 0 {
        return Err(ModelError::BadSplit);
    }
    let placement_splits = binomial(k, t);
    let delivery_splits = factor as u64 * binomial(k - t - 1, omega - t - 1);
    Ok(SubpacketizationReport {
        placement_splits,
        delivery_splits,
        theta: placement_splits * delivery_splits,
    })
}

/// What a single stream of a transmission carries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum StreamLabel {
    Unicast(SubpacketId),
    Multicast { codeword: CodewordIndex, copy: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamSpec {
    pub label: StreamLabel,
    /// Rate group: the max-min objective takes the minimum over groups of the
    /// summed stream rates inside each group.
    pub group: usize,
    /// Users that must decode this stream.
    pub intended: Vec<usize>,
}

/// One transmission vector: streams sent in parallel to a target user set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transmission {
    /// Target set `𝒦`, sorted.
    pub users: Vec<usize>,
    pub streams: Vec<StreamSpec>,
}

impl Transmission {
    pub fn group_count(&self) -> usize {
        self.streams.iter().map(|s| s.group + 1).max().unwrap_or(0)
    }

    /// Number of streams per group.
    pub fn group_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.group_count()];
        for s in &self.streams {
            sizes[s.group] += 1;
        }
        sizes
    }

    /// Whether `user` can regenerate stream `stream` from its cache and
    /// subtract it before decoding.
    pub fn cancels(&self, user: usize, stream: usize) -> bool {
        match &self.streams[stream].label {
            StreamLabel::Unicast(id) => id.packet.contains(user),
            StreamLabel::Multicast { .. } => false,
        }
    }

    /// Indices of the streams `user` must decode.
    pub fn intended_for(&self, user: usize) -> Vec<usize> {
        (0..self.streams.len())
            .filter(|&d| self.streams[d].intended.contains(&user))
            .collect()
    }

    /// Indices of the streams that interfere at `user`: neither intended nor
    /// cancellable.
    pub fn interferers_of(&self, user: usize) -> Vec<usize> {
        (0..self.streams.len())
            .filter(|&d| !self.streams[d].intended.contains(&user) && !self.cancels(user, d))
            .collect()
    }

    /// Indices of the streams visible at `user` after cache cancellation.
    pub fn visible_at(&self, user: usize) -> Vec<usize> {
        (0..self.streams.len()).filter(|&d| !self.cancels(user, d)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example_configs_are_valid() {
        assert!(NetworkConfig::new(10, 6, 4, 1, 10, 1, 1.0, 1.0).is_ok());
        assert!(NetworkConfig::new(3, 3, 2, 1, 3, 1, 1.0, 1.0).is_ok());
    }

    #[test]
    fn config_errors() {
        assert!(matches!(
            NetworkConfig::new(3, 3, 2, 2, 3, 1, 1.0, 1.0),
            Err(ModelError::IntegerGainViolation { .. })
        ));
        assert!(matches!(
            NetworkConfig::new(2, 3, 2, 2, 1, 1, 1.0, 1.0),
            Err(ModelError::TooFewUsers { k: 2, needed: 3 })
        ));
        assert!(matches!(
            NetworkConfig::new(3, 3, 2, 1, 3, 1, 0.0, 1.0),
            Err(ModelError::NonPositive("P_T"))
        ));
        assert!(matches!(
            NetworkConfig::new(3, 3, 2, 1, 3, 1, 1.0, -1.0),
            Err(ModelError::NonPositive("N0"))
        ));
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(10, 3), 120);
        assert_eq!(binomial(8, 0), 1);
        assert_eq!(binomial(3, 5), 0);
        assert_eq!(binomial(40, 20), 137_846_528_820);
    }

    #[test]
    fn packet_index_enumeration() {
        let p = packet_indices(3, 1);
        assert_eq!(p, vec![PacketIndex::new([1]), PacketIndex::new([2]), PacketIndex::new([3])]);
        let p = packet_indices(4, 2);
        assert_eq!(p.len(), 6);
        assert_eq!(p[0], PacketIndex::new([1, 2]));
        assert_eq!(p[5], PacketIndex::new([3, 4]));
        let p = packet_indices(5, 0);
        assert_eq!(p, vec![PacketIndex::new([])]);
    }

    #[test]
    fn cache_placement() {
        let c = NetworkConfig::with_gain(3, 3, 2, 1, 1.0, 1.0).unwrap();
        assert_eq!(cache_contents(&c, 1).unwrap(), vec![PacketIndex::new([1])]);
        let c = NetworkConfig::with_gain(4, 2, 2, 2, 1.0, 1.0).unwrap();
        assert_eq!(
            cache_contents(&c, 1).unwrap(),
            vec![PacketIndex::new([1, 2]), PacketIndex::new([1, 3]), PacketIndex::new([1, 4])]
        );
        let c = NetworkConfig::with_gain(4, 2, 2, 0, 1.0, 1.0).unwrap();
        assert!(cache_contents(&c, 2).unwrap().is_empty());
        assert!(matches!(cache_contents(&c, 5), Err(ModelError::UnknownUser { .. })));
    }

    #[test]
    fn placement_counts() {
        for k in 2..=7 {
            for t in 1..k {
                let c = NetworkConfig::with_gain(k, 2, 2, t, 1.0, 1.0).unwrap();
                let mut total = 0;
                for u in 1..=k {
                    let n = cache_contents(&c, u).unwrap().len();
                    assert_eq!(n as u64, binomial(k - 1, t - 1));
                    total += n;
                }
                assert_eq!(total as u64, t as u64 * binomial(k, t));
                for p in packet_indices(k, t) {
                    let holders = (1..=k)
                        .filter(|&u| cache_contents(&c, u).unwrap().contains(&p))
                        .count();
                    assert_eq!(holders, t);
                }
            }
        }
    }

    #[test]
    fn subpacketization_examples() {
        let c = NetworkConfig::with_gain(10, 6, 4, 1, 1.0, 1.0).unwrap();
        let r = subpacketization(&c, DeliveryScheme::Unicast { beta: 4 }, 3).unwrap();
        assert_eq!(r.delivery_splits, 32);
        assert_eq!(r.theta, 320);
        let r = subpacketization(&c, DeliveryScheme::Multicast { delta: 1 }, 4).unwrap();
        assert_eq!(r.delivery_splits, 28);
        let r = subpacketization(&c, DeliveryScheme::Unicast { beta: 1 }, 10).unwrap();
        assert_eq!(r.delivery_splits, 1);
        assert!(matches!(
            subpacketization(&c, DeliveryScheme::Unicast { beta: 1 }, 1),
            Err(ModelError::BadOmega { .. })
        ));
        for d in 1..5 {
            let one = subpacketization(&c, DeliveryScheme::Multicast { delta: 1 }, 5).unwrap();
            let many = subpacketization(&c, DeliveryScheme::Multicast { delta: d }, 5).unwrap();
            assert_eq!(many.theta, d as u64 * one.theta);
        }
    }

    #[test]
    fn combinations_are_lexicographic() {
        let c = combinations(&[1, 2, 3, 4], 2);
        assert_eq!(c, vec![vec![1, 2], vec![1, 3], vec![1, 4], vec![2, 3], vec![2, 4], vec![3, 4]]);
        assert_eq!(combinations(&[1, 2, 3], 0), vec![Vec::<i32>::new()]);
        assert_eq!(combinations(&[1, 2, 3], 3), vec![vec![1, 2, 3]]);
        assert!(combinations(&[1, 2], 3).is_empty());
    }
}
