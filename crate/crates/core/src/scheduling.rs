//! Multicast scheduling of XOR codewords.
//!
//! For a target set `𝒦` of `Ω` users every size-`(t+1)` subset `𝒯` labels one
//! codeword `X_𝒯`. The base schedule partitions these codewords into `S₀`
//! supersets in which every user appears exactly `β₀` times; the extended
//! schedule concatenates `δ` copies of that table and re-slices it into
//! windows of `η` supersets, giving `ηβ₀` streams per user per transmission.
//!
//! Base schedules are built constructively:
//! - `t = 1`, `Ω` even: circle-method round robin;
//! - `t = 1`, `Ω` odd: circulant difference classes `{i, i+d}`;
//! - otherwise: the max-flow induction behind Baranyai's theorem, run with
//!   per-part degree `β₀` instead of 1, which always succeeds.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{binomial, combinations, StreamLabel, StreamSpec, Transmission};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("omega = {omega} is below t+1 = {min}")]
    BadOmega { omega: usize, min: usize },
    #[error("duplicate users in target set")]
    DuplicateUsers,
    #[error("factorization construction failed for omega = {omega}, t = {t}")]
    SearchExhausted { omega: usize, t: usize },
    #[error("delta*S0 = {columns} is not divisible by eta = {eta}")]
    IndivisibleSlice { columns: usize, eta: usize },
    #[error("eta and delta must be at least 1")]
    ZeroMultiplier,
    #[error("malformed schedule text: {0}")]
    Parse(String),
}

/// Index `𝒯` of a multicast codeword: `t+1` users, sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CodewordIndex(Vec<usize>);

impl CodewordIndex {
    pub fn new(members: impl IntoIterator<Item = usize>) -> Self {
        let set: BTreeSet<usize> = members.into_iter().collect();
        CodewordIndex(set.into_iter().collect())
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

impl fmt::Display for CodewordIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|u| u.to_string()).collect();
        write!(f, "{}", parts.join(","))
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaseParams {
    /// Appearances of each user per superset.
    pub beta0: usize,
    /// Codewords per superset.
    pub b0: usize,
    /// Number of supersets.
    pub s0: usize,
}

pub fn base_params(omega: usize, t: usize) -> Result<BaseParams, ScheduleError> {
    if omega < t + 1 {
        return Err(ScheduleError::BadOmega { omega, min: t + 1 });
    }
    let g = gcd(t + 1, omega);
    let beta0 = (t + 1) / g;
    let b0 = omega / g;
    let total = binomial(omega, t + 1) as usize;
    Ok(BaseParams { beta0, b0, s0: total / b0 })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaseSchedule {
    pub omega: usize,
    pub t: usize,
    pub params: BaseParams,
    /// Target set, sorted.
    pub users: Vec<usize>,
    /// `S₀` supersets of `B₀` codewords each.
    pub supersets: Vec<Vec<CodewordIndex>>,
}

/// Partitions all size-`(t+1)` subsets of `users` into `S₀` supersets with
/// every user appearing exactly `β₀` times in each.
pub fn base_schedule(users: &[usize], t: usize) -> Result<BaseSchedule, ScheduleError> {
    let set: BTreeSet<usize> = users.iter().copied().collect();
    if set.len() != users.len() {
        return Err(ScheduleError::DuplicateUsers);
    }
    let users: Vec<usize> = set.into_iter().collect();
    let omega = users.len();
    let params = base_params(omega, t)?;
    let h = t + 1;

    let positional: Vec<Vec<Vec<usize>>> = if omega == h {
        vec![vec![(0..omega).collect()]]
    } else if h == 1 {
        vec![(0..omega).map(|i| vec![i]).collect()]
    } else if h == 2 && omega.is_multiple_of(2) {
        round_robin(omega)
    } else if h == 2 {
        circulant_pairs(omega)
    } else {
        flow_factorization(omega, h, params)
            .ok_or(ScheduleError::SearchExhausted { omega, t })?
    };

    let supersets = positional
        .into_iter()
        .map(|part| {
            part.into_iter()
                .map(|cw| CodewordIndex::new(cw.into_iter().map(|p| users[p])))
                .collect()
        })
        .collect();
    Ok(BaseSchedule { omega, t, params, users, supersets })
}

/// Circle method: position `n-1` stays put, the rest rotate.
fn round_robin(n: usize) -> Vec<Vec<Vec<usize>>> {
    let m = n - 1;
    (0..m)
        .map(|r| {
            let mut round = vec![vec![r, m]];
            for i in 1..n / 2 {
                let a = (r + i) % m;
                let b = (r + m - i) % m;
                round.push(vec![a.min(b), a.max(b)]);
            }
            round
        })
        .collect()
}

/// For odd `n`, difference class `d` is the 2-regular graph `{i, i+d mod n}`.
fn circulant_pairs(n: usize) -> Vec<Vec<Vec<usize>>> {
    (1..=(n - 1) / 2)
        .map(|d| {
            (0..n)
                .map(|i| {
                    let j = (i + d) % n;
                    vec![i.min(j), i.max(j)]
                })
                .collect()
        })
        .collect()
}

/// Baranyai-style induction: elements are added one at a time, and a max
/// flow decides which partial edges of each part receive the new element.
///
/// Invariant after processing `m` elements: every subset `S ⊆ [m]` occurs
/// `C(n−m, h−|S|)` times across all parts, and every processed element
/// occurs exactly `β₀` times in each part.
fn flow_factorization(n: usize, h: usize, params: BaseParams) -> Option<Vec<Vec<Vec<usize>>>> {
    let BaseParams { beta0, b0, s0 } = params;
    let mut parts: Vec<Vec<Vec<usize>>> = vec![vec![Vec::new(); b0]; s0];

    for m in 0..n {
        // class id per distinct partial edge
        let mut classes: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
        for part in &parts {
            for e in part {
                let next = classes.len();
                classes.entry(e.clone()).or_insert(next);
            }
        }
        let nc = classes.len();
        let source = 0;
        let sink = 1;
        let part_node = |i: usize| 2 + i;
        let class_node = |c: usize| 2 + s0 + c;
        let mut net = FlowNetwork::new(2 + s0 + nc);

        for i in 0..s0 {
            net.add_edge(source, part_node(i), beta0 as i64);
        }
        let mut part_edges: Vec<Vec<(Vec<usize>, usize)>> = Vec::with_capacity(s0);
        for (i, part) in parts.iter().enumerate() {
            let mut mult: BTreeMap<&Vec<usize>, i64> = BTreeMap::new();
            for e in part {
                *mult.entry(e).or_default() += 1;
            }
            let mut edges = Vec::new();
            for (e, cnt) in mult {
                let id = net.add_edge(part_node(i), class_node(classes[e]), cnt);
                edges.push((e.clone(), id));
            }
            part_edges.push(edges);
        }
        for (e, &c) in &classes {
            let remaining = n - m - 1;
            let cap = if e.len() < h { binomial(remaining, h - e.len() - 1) } else { 0 };
            net.add_edge(class_node(c), sink, cap as i64);
        }

        let flow = net.max_flow(source, sink);
        if flow != (s0 * beta0) as i64 {
            return None;
        }

        for (part, edges) in parts.iter_mut().zip(part_edges) {
            for (e, id) in edges {
                let mut grow = net.flow_on(id);
                for slot in part.iter_mut() {
                    if grow == 0 {
                        break;
                    }
                    if *slot == e {
                        slot.push(m);
                        grow -= 1;
                    }
                }
            }
        }
    }

    for part in &mut parts {
        part.sort();
    }
    Some(parts)
}

/// Dinic max flow on a small dense-ish graph.
struct FlowNetwork {
    adj: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<i64>,
    initial: Vec<i64>,
}

impl FlowNetwork {
    fn new(nodes: usize) -> Self {
        FlowNetwork { adj: vec![Vec::new(); nodes], to: Vec::new(), cap: Vec::new(), initial: Vec::new() }
    }

    fn add_edge(&mut self, u: usize, v: usize, c: i64) -> usize {
        let id = self.to.len();
        self.adj[u].push(id);
        self.to.push(v);
        self.cap.push(c);
        self.initial.push(c);
        self.adj[v].push(id + 1);
        self.to.push(u);
        self.cap.push(0);
        self.initial.push(0);
        id
    }

    fn flow_on(&self, id: usize) -> i64 {
        self.initial[id] - self.cap[id]
    }

    fn max_flow(&mut self, s: usize, t: usize) -> i64 {
        let n = self.adj.len();
        let mut total = 0;
        loop {
            let mut level = vec![usize::MAX; n];
            level[s] = 0;
            let mut queue = std::collections::VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                for &e in &self.adj[u] {
                    let v = self.to[e];
                    if self.cap[e] > 0 && level[v] == usize::MAX {
                        level[v] = level[u] + 1;
                        queue.push_back(v);
                    }
                }
            }
            if level[t] == usize::MAX {
                return total;
            }
            let mut iter = vec![0usize; n];
            loop {
                let pushed = self.augment(s, t, i64::MAX, &level, &mut iter);
                if pushed == 0 {
                    break;
                }
                total += pushed;
            }
        }
    }

    fn augment(&mut self, u: usize, t: usize, limit: i64, level: &[usize], iter: &mut [usize]) -> i64 {
        if u == t {
            return limit;
        }
        while iter[u] < self.adj[u].len() {
            let e = self.adj[u][iter[u]];
            let v = self.to[e];
            if self.cap[e] > 0 && level[v] == level[u] + 1 {
                let got = self.augment(v, t, limit.min(self.cap[e]), level, iter);
                if got > 0 {
                    self.cap[e] -= got;
                    self.cap[e ^ 1] += got;
                    return got;
                }
            }
            iter[u] += 1;
        }
        0
    }
}

/// One admissible stream count `β = ηβ₀` with the smallest `δ` that makes
/// `δS₀/η` integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeasibleBeta {
    pub beta: usize,
    pub eta: usize,
    pub delta: usize,
}

/// Largest `η` allowed by linear decodability: `G/β₀` receive dimensions and
/// `⌈η/S₀⌉ ≤ L − (Ω−t−1)ηβ₀` null-space dimensions.
pub fn eta_bound(omega: usize, t: usize, l: usize, g: usize) -> Result<usize, ScheduleError> {
    let p = base_params(omega, t)?;
    let num = l * p.s0;
    let den = 1 + (omega - t - 1) * p.beta0 * p.s0;
    Ok((num / den).min(g / p.beta0))
}

/// Every `β` for which a symmetric linear multicast schedule exists.
pub fn feasible_betas(omega: usize, t: usize, l: usize, g: usize) -> Result<Vec<FeasibleBeta>, ScheduleError> {
    let p = base_params(omega, t)?;
    let max_eta = eta_bound(omega, t, l, g)?;
    Ok((1..=max_eta)
        .map(|eta| FeasibleBeta { beta: eta * p.beta0, eta, delta: eta / gcd(eta, p.s0) })
        .collect())
}

/// A codeword occurrence in an extended schedule; `copy` is the 1-based copy
/// tag `q̂` distinguishing repeats of the same index.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CodewordCopy {
    pub codeword: CodewordIndex,
    pub copy: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtendedSchedule {
    pub omega: usize,
    pub t: usize,
    pub params: BaseParams,
    pub users: Vec<usize>,
    pub eta: usize,
    pub delta: usize,
    /// `δS₀/η` transmissions of `B₀η` codeword occurrences each.
    pub transmissions: Vec<Vec<CodewordCopy>>,
}

/// Concatenates `delta` copies of the base table and slices the result into
/// windows of `eta` supersets.
pub fn extended_schedule(base: &BaseSchedule, eta: usize, delta: usize) -> Result<ExtendedSchedule, ScheduleError> {
    if eta == 0 || delta == 0 {
        return Err(ScheduleError::ZeroMultiplier);
    }
    let columns = delta * base.params.s0;
    if !columns.is_multiple_of(eta) {
        return Err(ScheduleError::IndivisibleSlice { columns, eta });
    }
    let table: Vec<Vec<CodewordCopy>> = (0..delta)
        .flat_map(|c| {
            base.supersets.iter().map(move |col| {
                col.iter()
                    .map(|cw| CodewordCopy { codeword: cw.clone(), copy: c + 1 })
                    .collect::<Vec<_>>()
            })
        })
        .collect();
    let transmissions = table.chunks(eta).map(|w| w.concat()).collect();
    Ok(ExtendedSchedule {
        omega: base.omega,
        t: base.t,
        params: base.params,
        users: base.users.clone(),
        eta,
        delta,
        transmissions,
    })
}

impl ExtendedSchedule {
    pub fn beta(&self) -> usize {
        self.eta * self.params.beta0
    }

    /// Stream layout of transmission `index`: one stream per codeword
    /// occurrence, grouped by codeword index in order of first appearance.
    pub fn layout(&self, index: usize) -> Transmission {
        let mut groups: BTreeMap<&CodewordIndex, usize> = BTreeMap::new();
        let mut order = Vec::new();
        let entries = &self.transmissions[index];
        for e in entries {
            if !groups.contains_key(&e.codeword) {
                groups.insert(&e.codeword, order.len());
                order.push(&e.codeword);
            }
        }
        let streams = entries
            .iter()
            .map(|e| StreamSpec {
                label: StreamLabel::Multicast { codeword: e.codeword.clone(), copy: e.copy },
                group: groups[&e.codeword],
                intended: e.codeword.members().to_vec(),
            })
            .collect();
        Transmission { users: self.users.clone(), streams }
    }

    /// One transmission per line, codeword occurrences as `u1,u2,...#copy`
    /// separated by spaces.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for tx in &self.transmissions {
            let line: Vec<String> = tx.iter().map(|e| format!("{}#{}", e.codeword, e.copy)).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    /// Parses the text produced by [`ExtendedSchedule::to_text`] back into
    /// per-transmission codeword occurrences.
    pub fn parse_transmissions(text: &str) -> Result<Vec<Vec<CodewordCopy>>, ScheduleError> {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|line| {
                line.split_whitespace()
                    .map(|tok| {
                        let (users, copy) = tok
                            .split_once('#')
                            .ok_or_else(|| ScheduleError::Parse(format!("missing copy tag in {tok:?}")))?;
                        let members = users
                            .split(',')
                            .map(|u| u.parse::<usize>().map_err(|e| ScheduleError::Parse(e.to_string())))
                            .collect::<Result<Vec<_>, _>>()?;
                        let copy = copy.parse::<usize>().map_err(|e| ScheduleError::Parse(e.to_string()))?;
                        Ok(CodewordCopy { codeword: CodewordIndex::new(members), copy })
                    })
                    .collect()
            })
            .collect()
    }
}

impl BaseSchedule {
    /// One superset per line, codewords separated by spaces.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.supersets {
            let line: Vec<String> = s.iter().map(|c| c.to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    /// Checks the partition and regularity properties directly.
    pub fn validate(&self) -> bool {
        let h = self.t + 1;
        let mut all: Vec<Vec<usize>> = self.supersets.iter().flatten().map(|c| c.members().to_vec()).collect();
        all.sort();
        if all != combinations(&self.users, h) {
            return false;
        }
        self.supersets.len() == self.params.s0
            && self.supersets.iter().all(|s| {
                s.len() == self.params.b0
                    && self
                        .users
                        .iter()
                        .all(|&u| s.iter().filter(|c| c.contains(u)).count() == self.params.beta0)
            })
    }
}
