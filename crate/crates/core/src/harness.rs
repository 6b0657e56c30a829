//! Monte Carlo experiment driver and result persistence.
//!
//! An experiment fixes a network, a delivery scheme and an `(Ω, β)` choice,
//! then averages the symmetric rate over channel realizations at each SNR.
//! Realization `r` uses the sub-seed `splitmix64(seed ⊕ splitmix64(r))` for
//! its channels, which are shared by every SNR point; realizations run in
//! parallel and are aggregated in order, so results do not depend on the
//! thread count.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beamform::{
    optimize_linear, rx_bases, unicast_decode, unicast_plan_with_ledger, zf_rates, zf_tx_beamformers, LinearOptions,
    SubpacketLedger,
};
use crate::channel::{db_to_linear, sample_channels, ChannelSet};
use crate::covdesign::{optimize_covariances, CovOptions};
use crate::dofopt::{beta_max, dof_max, dof_reference_gtl};
use crate::model::{binomial, combinations, NetworkConfig, Transmission};
use crate::rate::{multicast_accounting, symmetric_rate, unicast_accounting, RoundAccounting};
use crate::scheduling::{base_params, base_schedule, eta_bound, extended_schedule, feasible_betas};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "UC-ZF")]
    UcZf,
    #[serde(rename = "UC-COV")]
    UcCov,
    #[serde(rename = "UC-LIN")]
    UcLin,
    #[serde(rename = "MC-LIN")]
    McLin,
    #[serde(rename = "MC-COV")]
    McCov,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [Scheme::UcZf, Scheme::UcCov, Scheme::UcLin, Scheme::McLin, Scheme::McCov];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::UcZf => "UC-ZF",
            Scheme::UcCov => "UC-COV",
            Scheme::UcLin => "UC-LIN",
            Scheme::McLin => "MC-LIN",
            Scheme::McCov => "MC-COV",
        }
    }

    pub fn is_multicast(self) -> bool {
        matches!(self, Scheme::McLin | Scheme::McCov)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Parse(format!("unknown scheme {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    /// Optimize one target set per realization and charge every target set
    /// of the round with its transmission times.
    #[default]
    Representative,
    /// Optimize every target set of the round.
    Exhaustive,
}

impl FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "representative" => Ok(EvalMode::Representative),
            "exhaustive" => Ok(EvalMode::Exhaustive),
            other => Err(Error::Parse(format!("unknown evaluation mode {other:?}"))),
        }
    }
}

pub const DEFAULT_REALIZATIONS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    /// Network; `p_t` is overridden by each SNR point (`P_T = SNR·N0`).
    pub config: NetworkConfig,
    pub scheme: Scheme,
    /// `None` selects automatically.
    pub omega: Option<usize>,
    /// `None` selects the largest admissible value.
    pub beta: Option<usize>,
    pub snr_grid_db: Vec<f64>,
    pub realizations: usize,
    pub seed: u64,
    pub eval_mode: EvalMode,
}

/// `(Ω, β)` and the schedule parameters an experiment resolves to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedScheme {
    pub omega: usize,
    pub beta: usize,
    /// Multicast window length and copy count; 1 for unicast.
    pub eta: usize,
    pub delta: usize,
    pub accounting: RoundAccounting,
}

/// Largest multicast `β` at `omega`, or `None` if no stream fits.
pub fn auto_multicast_beta(omega: usize, t: usize, l: usize, g: usize) -> Option<usize> {
    feasible_betas(omega, t, l, g).ok()?.last().map(|f| f.beta)
}

pub fn resolve(spec: &ExperimentSpec) -> Result<ResolvedScheme> {
    let c = &spec.config;
    let invalid = |m: String| Error::InvalidExperiment(m);
    if spec.realizations == 0 {
        return Err(invalid("realizations must be at least 1".into()));
    }
    if spec.snr_grid_db.iter().any(|x| !x.is_finite()) {
        return Err(invalid("SNR grid contains a non-finite value".into()));
    }
    if spec.scheme.is_multicast() {
        let omega = match spec.omega {
            Some(o) => o,
            None => (c.t + 1..=c.k)
                .filter_map(|o| auto_multicast_beta(o, c.t, c.l, c.g).map(|b| (o, b)))
                .max_by(|a, b| (a.0 * a.1).cmp(&(b.0 * b.1)).then(b.1.cmp(&a.1)).then(b.0.cmp(&a.0)))
                .map(|(o, _)| o)
                .ok_or_else(|| invalid("no multicast (omega, beta) is decodable".into()))?,
        };
        c.check_omega(omega)?;
        let p = base_params(omega, c.t)?;
        let options = feasible_betas(omega, c.t, c.l, c.g)?;
        let chosen = match spec.beta {
            None => options.last().copied(),
            Some(b) => options.iter().copied().find(|f| f.beta == b),
        }
        .ok_or_else(|| {
            invalid(format!(
                "beta {:?} is not admissible at omega = {omega} (multiples of {} up to {})",
                spec.beta,
                p.beta0,
                eta_bound(omega, c.t, c.l, c.g).unwrap_or(0) * p.beta0
            ))
        })?;
        Ok(ResolvedScheme {
            omega,
            beta: chosen.beta,
            eta: chosen.eta,
            delta: chosen.delta,
            accounting: multicast_accounting(c.k, c.t, omega, chosen.delta, p.s0, chosen.eta),
        })
    } else {
        let (omega, auto_beta) = match spec.omega {
            Some(o) => {
                c.check_omega(o)?;
                (o, beta_max(o, c.t, c.l, c.g)?)
            }
            None => {
                let s = dof_max(c)?;
                (s.omega_star, s.beta_star)
            }
        };
        let beta = spec.beta.unwrap_or(auto_beta);
        if beta == 0 || beta > auto_beta {
            return Err(invalid(format!("beta = {beta} is not decodable at omega = {omega} (max {auto_beta})")));
        }
        Ok(ResolvedScheme { omega, beta, eta: 1, delta: 1, accounting: unicast_accounting(c.k, c.t, omega, beta) })
    }
}

/// Transmission layouts for one target set.
pub fn transmissions_for(scheme: Scheme, resolved: &ResolvedScheme, users: &[usize], t: usize, ledger: &mut SubpacketLedger) -> Result<Vec<Transmission>> {
    if scheme.is_multicast() {
        let base = base_schedule(users, t)?;
        let ext = extended_schedule(&base, resolved.eta, resolved.delta)?;
        Ok((0..ext.transmissions.len()).map(|i| ext.layout(i)).collect())
    } else {
        let plan = unicast_plan_with_ledger(users, resolved.beta, t, ledger)?;
        Ok((0..plan.transmissions.len()).map(|s| plan.layout(s)).collect())
    }
}

/// Per-transmission effective rate and stream sum rate.
pub fn evaluate_transmission(scheme: Scheme, channels: &ChannelSet, tx: &Transmission, beta: usize, p_t: f64, n0: f64) -> Result<(f64, f64)> {
    match scheme {
        Scheme::UcZf => {
            let rx = rx_bases(channels, &tx.users, beta)?;
            let w = zf_tx_beamformers(channels, tx, &rx, p_t)?;
            let outcomes = unicast_decode(channels, tx, &w, &rx, n0)?;
            let rates = zf_rates(&outcomes, tx);
            Ok((rates.r_c, rates.sum_rate()))
        }
        Scheme::UcLin | Scheme::McLin => {
            let sol = optimize_linear(channels, tx, p_t, n0, &LinearOptions::default())?;
            Ok((sol.rates.r_c, sol.rates.sum_rate()))
        }
        Scheme::UcCov | Scheme::McCov => {
            let sol = optimize_covariances(channels, tx, p_t, n0, &CovOptions::default())?;
            Ok((sol.rate, sol.rate * tx.streams.len() as f64))
        }
    }
}

/// Symmetric rate and mean per-transmission sum rate of one realization.
pub fn evaluate_realization(spec: &ExperimentSpec, resolved: &ResolvedScheme, channels: &ChannelSet, p_t: f64) -> Result<(f64, f64)> {
    let c = &spec.config;
    let subsets: Vec<Vec<usize>> = match spec.eval_mode {
        EvalMode::Representative => vec![(1..=resolved.omega).collect()],
        EvalMode::Exhaustive => combinations(&c.users(), resolved.omega),
    };
    let mut ledger = SubpacketLedger::default();
    let mut rates = Vec::new();
    let mut sums = Vec::new();
    for users in &subsets {
        for tx in transmissions_for(spec.scheme, resolved, users, c.t, &mut ledger)? {
            let (r, s) = evaluate_transmission(spec.scheme, channels, &tx, resolved.beta, p_t, c.n0)?;
            rates.push(r);
            sums.push(s);
        }
    }
    let mut r_sym = symmetric_rate(&rates, resolved.accounting.theta, c.k)?;
    if spec.eval_mode == EvalMode::Representative {
        r_sym /= binomial(c.k, resolved.omega) as f64;
    }
    Ok((r_sym, sums.iter().sum::<f64>() / sums.len() as f64))
}

/// Deterministic per-realization seed.
pub fn realization_seed(seed: u64, r: usize) -> u64 {
    splitmix64(seed ^ splitmix64(r as u64))
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scheme: Scheme,
    pub omega: usize,
    pub beta: usize,
    pub snr_db: f64,
    pub r_sym_mean: f64,
    pub r_sym_stderr: f64,
    pub sum_rate_mean: f64,
    /// Successful realizations.
    pub n: usize,
    pub seed: u64,
    /// Not persisted, so result files stay reproducible.
    #[serde(skip)]
    pub wall_time_s: f64,
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs the whole sweep; realizations are evaluated in parallel.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    run_experiment_with(spec, true)
}

/// Same as [`run_experiment`], optionally on the calling thread only.
pub fn run_experiment_with(spec: &ExperimentSpec, parallel: bool) -> Result<Vec<ResultRow>> {
    let resolved = resolve(spec)?;
    let started = Instant::now();
    let c = &spec.config;
    let users: Vec<usize> = match spec.eval_mode {
        EvalMode::Representative => (1..=resolved.omega).collect(),
        EvalMode::Exhaustive => c.users(),
    };
    let one = |r: usize| -> Vec<std::result::Result<(f64, f64), String>> {
        let channels = sample_channels(c, &users, realization_seed(spec.seed, r));
        spec.snr_grid_db
            .iter()
            .map(|&snr| {
                let p_t = db_to_linear(snr) * c.n0;
                evaluate_realization(spec, &resolved, &channels, p_t).map_err(|e| e.to_string())
            })
            .collect()
    };
    let outcomes: Vec<Vec<std::result::Result<(f64, f64), String>>> = if parallel {
        (0..spec.realizations).into_par_iter().map(one).collect()
    } else {
        (0..spec.realizations).map(one).collect()
    };

    let failed: Vec<&String> = outcomes.iter().filter_map(|o| o.iter().find_map(|x| x.as_ref().err())).collect();
    if failed.len() * 5 > spec.realizations {
        return Err(Error::FailureBudgetExceeded { failed: failed.len(), total: spec.realizations, first: failed[0].clone() });
    }
    let elapsed = started.elapsed().as_secs_f64();
    let rows = spec
        .snr_grid_db
        .iter()
        .enumerate()
        .map(|(i, &snr)| {
            let ok: Vec<(f64, f64)> = outcomes.iter().filter_map(|o| o[i].as_ref().ok().copied()).collect();
            let (r_mean, r_err) = mean_stderr(&ok.iter().map(|x| x.0).collect::<Vec<_>>());
            let (s_mean, _) = mean_stderr(&ok.iter().map(|x| x.1).collect::<Vec<_>>());
            ResultRow {
                scheme: spec.scheme,
                omega: resolved.omega,
                beta: resolved.beta,
                snr_db: snr,
                r_sym_mean: r_mean,
                r_sym_stderr: r_err,
                sum_rate_mean: s_mean,
                n: ok.len(),
                seed: spec.seed,
                wall_time_s: elapsed / spec.snr_grid_db.len().max(1) as f64,
            }
        })
        .collect();
    Ok(rows)
}

/// One row of a DoF-versus-L table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DofRow {
    pub l: usize,
    pub dof: usize,
    pub omega: usize,
    pub beta: usize,
    /// `G·t + L`, when `G` divides `L`.
    pub reference: Option<usize>,
}

/// DoF of the proposed design and of the `Gt + L` reference across `l_grid`
/// with `k` users.
pub fn dof_sweep(l_grid: &[usize], g: usize, t: usize, k: usize) -> Result<Vec<DofRow>> {
    l_grid
        .iter()
        .map(|&l| {
            let cfg = NetworkConfig::with_gain(k, l, g, t, 1.0, 1.0)?;
            let s = dof_max(&cfg)?;
            Ok(DofRow { l, dof: s.dof, omega: s.omega_star, beta: s.beta_star, reference: dof_reference_gtl(l, g, t) })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::Parse(format!("unknown output format {other:?}"))),
        }
    }
}

pub const CSV_HEADER: &str = "scheme,omega,beta,snr_db,r_sym_mean,r_sym_stderr,sum_rate_mean,n,seed";

/// Formats `x` with 9 significant digits, trimming trailing zeros.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let trim = |s: String| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    };
    // the exponent after rounding to 9 digits
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        trim(format!("{:.*}", (8 - exp) as usize, x))
    } else {
        format!("{}e{}", trim(mantissa.to_string()), exp)
    }
}

pub fn rows_to_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.scheme,
            r.omega,
            r.beta,
            format_sig9(r.snr_db),
            format_sig9(r.r_sym_mean),
            format_sig9(r.r_sym_stderr),
            format_sig9(r.sum_rate_mean),
            r.n,
            r.seed
        ));
    }
    out
}

pub fn rows_from_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Parse("unexpected CSV header".into()));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}")));
    let int = |s: &str| s.parse::<u64>().map_err(|e| Error::Parse(format!("{s:?}: {e}")));
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 9 {
                return Err(Error::Parse(format!("expected 9 fields in {line:?}")));
            }
            Ok(ResultRow {
                scheme: f[0].parse()?,
                omega: int(f[1])? as usize,
                beta: int(f[2])? as usize,
                snr_db: num(f[3])?,
                r_sym_mean: num(f[4])?,
                r_sym_stderr: num(f[5])?,
                sum_rate_mean: num(f[6])?,
                n: int(f[7])? as usize,
                seed: int(f[8])?,
                wall_time_s: 0.0,
            })
        })
        .collect()
}

/// Renders rows as CSV (fixed column order) or as a JSON array.
pub fn format_results(rows: &[ResultRow], format: OutputFormat) -> Result<String> {
    Ok(match format {
        OutputFormat::Csv => rows_to_csv(rows),
        OutputFormat::Json => serde_json::to_string_pretty(rows)? + "\n",
    })
}

pub fn emit_results(rows: &[ResultRow], path: &Path, format: OutputFormat) -> Result<()> {
    std::fs::write(path, format_results(rows, format)?)?;
    Ok(())
}

pub fn read_results(path: &Path, format: OutputFormat) -> Result<Vec<ResultRow>> {
    let text = std::fs::read_to_string(path)?;
    match format {
        OutputFormat::Csv => rows_from_csv(&text),
        OutputFormat::Json => Ok(serde_json::from_str(&text)?),
    }
}

/// Named invariant check with its outcome.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Fast self-checks of the combinatorial and zero-forcing machinery.
pub fn validate_invariants() -> Vec<CheckOutcome> {
    let mut out = Vec::new();

    let dof_cases = [((10, 3, 1), 15), ((6, 4, 1), 12), ((3, 2, 1), 6), ((4, 4, 1), 8), ((4, 1, 1), 5), ((4, 2, 0), 4), ((4, 4, 0), 4)];
    let mut bad = Vec::new();
    for ((l, g, t), want) in dof_cases {
        let got = NetworkConfig::with_gain(10, l, g, t, 1.0, 1.0).ok().and_then(|c| dof_max(&c).ok()).map(|s| s.dof);
        if got != Some(want) {
            bad.push(format!("(L={l},G={g},t={t}) -> {got:?}"));
        }
    }
    out.push(CheckOutcome { name: "dof-examples", passed: bad.is_empty(), detail: bad.join("; ") });

    let mut bad = Vec::new();
    for omega in 2..=8usize {
        for t in 1..=3usize {
            if omega < t + 1 {
                continue;
            }
            let users: Vec<usize> = (1..=omega).collect();
            match base_schedule(&users, t) {
                Ok(s) if s.validate() => {}
                Ok(_) => bad.push(format!("omega={omega} t={t}: invalid partition")),
                Err(e) => bad.push(format!("omega={omega} t={t}: {e}")),
            }
        }
    }
    out.push(CheckOutcome { name: "schedule-partitions", passed: bad.is_empty(), detail: bad.join("; ") });

    let mut bad = Vec::new();
    for omega in 2..=14usize {
        for t in 0..=4usize {
            if omega < t + 1 {
                continue;
            }
            let p = base_params(omega, t).expect("valid omega");
            if !binomial(omega, t + 1).is_multiple_of(p.b0 as u64) || !binomial(omega - 1, t).is_multiple_of(p.beta0 as u64) {
                bad.push(format!("omega={omega} t={t}"));
            }
        }
    }
    out.push(CheckOutcome { name: "divisibility", passed: bad.is_empty(), detail: bad.join("; ") });

    let mut worst: f64 = 0.0;
    let mut errors = Vec::new();
    for (l, g, beta) in [(3, 2, 2), (6, 4, 4)] {
        let cfg = NetworkConfig::with_gain(3, l, g, 1, 1.0, 1.0).expect("valid config");
        for seed in 0..10 {
            let ch = sample_channels(&cfg, &[1, 2, 3], seed);
            let resolved = ResolvedScheme { omega: 3, beta, eta: 1, delta: 1, accounting: unicast_accounting(3, 1, 3, beta) };
            let txs = match transmissions_for(Scheme::UcZf, &resolved, &[1, 2, 3], 1, &mut SubpacketLedger::default()) {
                Ok(x) => x,
                Err(e) => {
                    errors.push(e.to_string());
                    continue;
                }
            };
            for tx in txs {
                let res = rx_bases(&ch, &tx.users, beta).map_err(Error::from).and_then(|rx| {
                    let w = zf_tx_beamformers(&ch, &tx, &rx, 1.0)?;
                    Ok(crate::beamform::unicast_decode_residual(&ch, &tx, &w, &rx)?)
                });
                match res {
                    Ok(r) => worst = worst.max(r),
                    Err(e) => errors.push(e.to_string()),
                }
            }
        }
    }
    out.push(CheckOutcome {
        name: "zf-residual",
        passed: errors.is_empty() && worst <= 1e-9,
        detail: if errors.is_empty() { format!("max residual {worst:e}") } else { errors.join("; ") },
    });
    out
}

/// Versioned experiment file (`schema = 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentFile {
    pub schema: u32,
    pub network: NetworkSection,
    pub experiment: ExperimentSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSection {
    pub k: usize,
    pub l: usize,
    pub g: usize,
    pub t: usize,
    #[serde(default = "unit")]
    pub n0: f64,
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSection {
    pub scheme: Scheme,
    #[serde(default)]
    pub omega: Option<usize>,
    #[serde(default)]
    pub beta: Option<usize>,
    pub snr_db: Vec<f64>,
    #[serde(default = "default_realizations")]
    pub realizations: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub eval_mode: EvalMode,
}

fn default_realizations() -> usize {
    DEFAULT_REALIZATIONS
}

pub const SCHEMA_VERSION: u32 = 1;

impl ExperimentFile {
    pub fn into_spec(self) -> Result<ExperimentSpec> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::InvalidExperiment(format!("unsupported schema {} (expected {SCHEMA_VERSION})", self.schema)));
        }
        let n = self.network;
        let config = NetworkConfig::with_gain(n.k, n.l, n.g, n.t, n.n0, n.n0)?;
        let e = self.experiment;
        Ok(ExperimentSpec {
            config,
            scheme: e.scheme,
            omega: e.omega,
            beta: e.beta,
            snr_grid_db: e.snr_db,
            realizations: e.realizations,
            seed: e.seed,
            eval_mode: e.eval_mode,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(scheme: Scheme, k: usize, l: usize, g: usize, omega: Option<usize>) -> ExperimentSpec {
        ExperimentSpec {
            config: NetworkConfig::with_gain(k, l, g, 1, 1.0, 1.0).unwrap(),
            scheme,
            omega,
            beta: None,
            snr_grid_db: vec![10.0],
            realizations: 2,
            seed: 3,
            eval_mode: EvalMode::Representative,
        }
    }

    #[test]
    fn fig5_auto_beta() {
        let expected = [(2, 3), (3, 2), (4, 3), (5, 2), (6, 2), (8, 1), (10, 1)];
        for (omega, beta) in expected {
            let r = resolve(&spec(Scheme::McLin, 20, 10, 3, Some(omega))).unwrap();
            assert_eq!(r.beta, beta, "omega={omega}");
        }
        assert!(resolve(&spec(Scheme::McLin, 20, 10, 3, Some(7))).is_err());
    }

    #[test]
    fn unicast_auto_uses_dof_optimum() {
        let r = resolve(&spec(Scheme::UcZf, 10, 10, 3, None)).unwrap();
        assert_eq!((r.omega, r.beta), (5, 3));
        let mut s = spec(Scheme::UcZf, 10, 3, 2, Some(3));
        s.beta = Some(3);
        assert!(matches!(resolve(&s), Err(Error::InvalidExperiment(_))));
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
        }
        assert!("XX".parse::<Scheme>().is_err());
    }

    #[test]
    fn sig9_formatting() {
        assert_eq!(format_sig9(0.0), "0");
        assert_eq!(format_sig9(1.5), "1.5");
        assert_eq!(format_sig9(123456789.4), "123456789");
        assert_eq!(format_sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(format_sig9(2.5e-9), "2.5e-9");
        assert_eq!(format_sig9(-7.25e12), "-7.25e12");
        assert_eq!(format_sig9(9.9999999996), "10");
        for x in [std::f64::consts::PI, 1e-7 * std::f64::consts::E, 12345.678912345, -0.000123456789123] {
            let back: f64 = format_sig9(x).parse().unwrap();
            assert!(((back - x) / x).abs() < 5e-9);
        }
    }

    #[test]
    fn serial_and_parallel_agree() {
        let s = spec(Scheme::UcZf, 3, 3, 2, Some(3));
        let a = run_experiment_with(&s, true).unwrap();
        let b = run_experiment_with(&s, false).unwrap();
        assert_eq!(rows_to_csv(&a), rows_to_csv(&b));
    }

    #[test]
    fn dof_sweep_rows() {
        let rows = dof_sweep(&[4, 8, 12, 16], 8, 1, 20).unwrap();
        for r in &rows {
            if let Some(reference) = r.reference {
                assert!(r.dof >= reference, "{r:?}");
            }
        }
        let rows = dof_sweep(&[1, 3, 5, 9], 2, 0, 20).unwrap();
        for r in &rows {
            assert_eq!(r.dof, r.l);
        }
        let direct = dof_max(&NetworkConfig::with_gain(20, 6, 4, 1, 1.0, 1.0).unwrap()).unwrap();
        assert_eq!(dof_sweep(&[6], 4, 1, 20).unwrap()[0].dof, direct.dof);
    }

    #[test]
    fn validation_suite_passes() {
        for c in validate_invariants() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
