//! Acceptance suite: one pass/fail line per criterion, nonzero exit if any
//! criterion fails.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use cc_mimo::beamform::{
    mmse_receivers, mmse_sinr, optimize_linear, rx_bases, stream_mse, stream_sinr, unicast_decode_residual,
    unicast_plan, zf_tx_beamformers, LinearOptions, LinearSolution, SubpacketLedger, TransmitSolver,
};
use cc_mimo::channel::{complex_gaussian, db_to_linear, sample_channels, user_stream, ChannelSet};
use cc_mimo::covdesign::{
    from_beamformers, optimize_covariances, optimize_covariances_from, verify_mac_feasibility, water_filling_capacity, CovOptions,
    CovProblem, CovSolution,
};
use cc_mimo::dofopt::dof_max;
use cc_mimo::harness::{
    emit_results, resolve, run_experiment, run_experiment_with, transmissions_for, EvalMode, ExperimentSpec, OutputFormat,
    ResultRow, Scheme,
};
use cc_mimo::linalg::CVector;
use cc_mimo::model::{binomial, NetworkConfig, Transmission};
use cc_mimo::rate::dof_slope;
use cc_mimo::scheduling::{base_params, base_schedule, feasible_betas, BaseSchedule};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn config(k: usize, l: usize, g: usize, t: usize) -> NetworkConfig {
    NetworkConfig::with_gain(k, l, g, t, 1.0, 1.0).expect("valid config")
}

fn spec(k: usize, l: usize, g: usize, scheme: Scheme, omega: usize, beta: Option<usize>, snr: &[f64], realizations: usize, seed: u64) -> ExperimentSpec {
    ExperimentSpec {
        config: config(k, l, g, 1),
        scheme,
        omega: Some(omega),
        beta,
        snr_grid_db: snr.to_vec(),
        realizations,
        seed,
        eval_mode: EvalMode::Representative,
    }
}

/// The multicast transmission of target set {1, 2, 3} used by the
/// optimizer criteria (L=4, G=2, Ω=3, t=1).
fn multicast_instance() -> (ExperimentSpec, Transmission) {
    let s = spec(10, 4, 2, Scheme::McLin, 3, None, &[10.0], 1, 0);
    let resolved = resolve(&s).expect("resolvable");
    let mut txs = transmissions_for(s.scheme, &resolved, &[1, 2, 3], 1, &mut SubpacketLedger::default()).expect("schedule");
    assert_eq!(txs.len(), 1);
    (s, txs.remove(0))
}

// --- 1 -------------------------------------------------------------------

fn dof_exactness() -> Outcome {
    let cases = [
        ((10, 3, 1), Some((5, 3)), 15),
        ((6, 4, 1), Some((3, 4)), 12),
        ((3, 2, 1), None, 6),
        ((4, 4, 1), None, 8),
        ((4, 1, 1), None, 5),
        ((4, 2, 0), None, 4),
        ((4, 4, 0), None, 4),
    ];
    for ((l, g, t), pair, dof) in cases {
        let sol = dof_max(&config(10, l, g, t)).map_err(|e| e.to_string())?;
        ensure(sol.dof == dof, || format!("(L={l},G={g},t={t}) dof {} != {dof}", sol.dof))?;
        if let Some((o, b)) = pair {
            ensure((sol.omega_star, sol.beta_star) == (o, b), || {
                format!("(L={l},G={g},t={t}) (omega,beta) = ({},{}) != ({o},{b})", sol.omega_star, sol.beta_star)
            })?;
        }
    }
    Ok(format!("{} configurations", cases.len()))
}

// --- 2 -------------------------------------------------------------------

fn superset_sets(s: &BaseSchedule) -> BTreeSet<BTreeSet<Vec<usize>>> {
    s.supersets.iter().map(|col| col.iter().map(|c| c.members().to_vec()).collect()).collect()
}

fn expected_sets(sets: &[&[[usize; 2]]]) -> BTreeSet<BTreeSet<Vec<usize>>> {
    sets.iter().map(|col| col.iter().map(|c| c.to_vec()).collect()).collect()
}

fn scheduling_exactness() -> Outcome {
    let betas = |omega: usize| -> Result<Vec<usize>, String> {
        Ok(feasible_betas(omega, 1, 10, 3).map_err(|e| e.to_string())?.iter().map(|f| f.beta).collect())
    };
    for (omega, want) in [(2, vec![1, 2, 3]), (4, vec![1, 2, 3]), (5, vec![2]), (7, vec![])] {
        let got = betas(omega)?;
        ensure(got == want, || format!("omega={omega}: betas {got:?} != {want:?}"))?;
    }
    let params = |o| base_params(o, 1).map(|p| (p.beta0, p.b0, p.s0)).map_err(|e| e.to_string());
    ensure(params(2)? == (1, 1, 1), || "base params omega=2".into())?;
    ensure(params(4)? == (1, 2, 3), || "base params omega=4".into())?;
    ensure(params(5)? == (2, 5, 2), || "base params omega=5".into())?;

    let four = base_schedule(&[1, 2, 3, 4], 1).map_err(|e| e.to_string())?;
    let want = expected_sets(&[&[[1, 2], [3, 4]], &[[1, 3], [2, 4]], &[[1, 4], [2, 3]]]);
    ensure(four.validate() && superset_sets(&four) == want, || format!("omega=4 schedule {:?}", superset_sets(&four)))?;
    let five = base_schedule(&[1, 2, 3, 4, 5], 1).map_err(|e| e.to_string())?;
    let want = expected_sets(&[&[[1, 2], [2, 3], [3, 4], [4, 5], [1, 5]], &[[1, 3], [2, 4], [3, 5], [1, 4], [2, 5]]]);
    ensure(five.validate() && superset_sets(&five) == want, || format!("omega=5 schedule {:?}", superset_sets(&five)))?;

    let mut checked = 0;
    for omega in 2..=8usize {
        for t in 1..=3usize {
            if omega < t + 1 {
                continue;
            }
            let users: Vec<usize> = (1..=omega).collect();
            let s = base_schedule(&users, t).map_err(|e| format!("omega={omega} t={t}: {e}"))?;
            ensure(independent_partition_check(&s, omega, t), || format!("omega={omega} t={t}: not a valid partition"))?;
            checked += 1;
        }
    }
    Ok(format!("{checked} (omega, t) partitions verified"))
}

/// Counts occurrences directly instead of trusting `BaseSchedule::validate`.
fn independent_partition_check(s: &BaseSchedule, omega: usize, t: usize) -> bool {
    let p = match base_params(omega, t) {
        Ok(p) => p,
        Err(_) => return false,
    };
    let mut seen = BTreeSet::new();
    for col in &s.supersets {
        if col.len() != p.b0 {
            return false;
        }
        let mut count = vec![0usize; omega + 1];
        for cw in col {
            let m = cw.members();
            if m.len() != t + 1 || !seen.insert(m.to_vec()) {
                return false;
            }
            for &u in m {
                count[u] += 1;
            }
        }
        if count[1..].iter().any(|&c| c != p.beta0) {
            return false;
        }
    }
    seen.len() as u64 == binomial(omega, t + 1) && s.supersets.len() == p.s0
}

// --- 3 -------------------------------------------------------------------

fn divisibility() -> Outcome {
    let mut n = 0;
    for omega in 2..=14usize {
        for t in 0..=4usize {
            if omega < t + 1 {
                continue;
            }
            let p = base_params(omega, t).map_err(|e| e.to_string())?;
            ensure(binomial(omega, t + 1).is_multiple_of(p.b0 as u64), || format!("B0 ∤ C({omega},{}) at t={t}", t + 1))?;
            ensure(binomial(omega - 1, t).is_multiple_of(p.beta0 as u64), || format!("beta0 ∤ C({},{t})", omega - 1))?;
            n += 1;
        }
    }
    Ok(format!("{n} (omega, t) pairs"))
}

// --- 4 -------------------------------------------------------------------

fn zf_nulling() -> Outcome {
    let mut worst: f64 = 0.0;
    for (l, g, beta) in [(3, 2, 2), (6, 4, 4)] {
        let cfg = config(10, l, g, 1);
        let plan = unicast_plan(&[1, 2, 3], beta, 1).map_err(|e| e.to_string())?;
        for seed in 0..100 {
            let ch = sample_channels(&cfg, &[1, 2, 3], seed);
            for s in 0..plan.transmissions.len() {
                let tx = plan.layout(s);
                let rx = rx_bases(&ch, &tx.users, beta).map_err(|e| e.to_string())?;
                let w = zf_tx_beamformers(&ch, &tx, &rx, 1.0).map_err(|e| e.to_string())?;
                let r = unicast_decode_residual(&ch, &tx, &w, &rx).map_err(|e| e.to_string())?;
                worst = worst.max(r);
            }
        }
    }
    ensure(worst <= 1e-9, || format!("max residual {worst:e}"))?;
    Ok(format!("max residual {worst:.3e}"))
}

// --- 5 -------------------------------------------------------------------

fn zf_slope() -> Outcome {
    let grid = [40.0, 45.0, 50.0, 55.0, 60.0];
    let mut details = Vec::new();
    for (l, g, beta, want) in [(3, 2, 2, 6.0), (6, 4, 4, 12.0)] {
        let rows = run_experiment(&spec(10, l, g, Scheme::UcZf, 3, Some(beta), &grid, 20, 1)).map_err(|e| e.to_string())?;
        let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.snr_db, r.sum_rate_mean)).collect();
        let slope = dof_slope(&points).map_err(|e| e.to_string())?;
        ensure((slope - want).abs() <= 0.1 * want, || format!("(L={l},G={g}) slope {slope:.4} not within 10% of {want}"))?;
        details.push(format!("(L={l},G={g}) slope {slope:.3}"));
    }
    Ok(details.join(", "))
}

// --- 6, 7, 11 --------------------------------------------------------------

struct OptimizerRun {
    channels: ChannelSet,
    p_t: f64,
    linear: LinearSolution,
    cov_identity: CovSolution,
    cov_warm: CovSolution,
}

fn optimizer_runs() -> Result<Vec<OptimizerRun>, String> {
    let (s, tx) = multicast_instance();
    let mut runs = Vec::new();
    for snr_db in [10.0, 20.0, 30.0] {
        let p_t = db_to_linear(snr_db);
        for seed in 0..50 {
            let channels = sample_channels(&s.config, &tx.users, seed);
            let linear = optimize_linear(&channels, &tx, p_t, 1.0, &LinearOptions::default()).map_err(|e| e.to_string())?;
            let cov_identity = optimize_covariances(&channels, &tx, p_t, 1.0, &CovOptions::default()).map_err(|e| e.to_string())?;
            let problem = CovProblem::new(&channels, &tx, p_t, 1.0).map_err(|e| e.to_string())?;
            let cov_warm =
                optimize_covariances_from(&problem, from_beamformers(&linear.w), &CovOptions::default()).map_err(|e| e.to_string())?;
            runs.push(OptimizerRun { channels, p_t, linear, cov_identity, cov_warm });
        }
    }
    Ok(runs)
}

fn monotone(history: &[f64]) -> bool {
    history.windows(2).all(|w| w[1] >= w[0] - 1e-8)
}

fn sca_monotonicity(runs: &[OptimizerRun]) -> Outcome {
    for (i, r) in runs.iter().enumerate() {
        ensure(monotone(&r.linear.history), || format!("instance {i}: linear history {:?}", r.linear.history))?;
        ensure(monotone(&r.cov_identity.history), || format!("instance {i}: covariance history {:?}", r.cov_identity.history))?;
        ensure(monotone(&r.cov_warm.history), || format!("instance {i}: warm covariance history {:?}", r.cov_warm.history))?;
    }
    Ok(format!("{} instances, 3 trajectories each", runs.len()))
}

fn relaxation_ordering(runs: &[OptimizerRun]) -> Outcome {
    let mut min_gap = f64::INFINITY;
    for (i, r) in runs.iter().enumerate() {
        let cov = r.cov_identity.rate.max(r.cov_warm.rate);
        let gap = cov - r.linear.r_c();
        min_gap = min_gap.min(gap);
        ensure(gap >= -1e-6, || format!("instance {i}: covariance {cov} < linear {}", r.linear.r_c()))?;
    }
    Ok(format!("{} instances, min(R_cov - r_c) = {min_gap:.3e}", runs.len()))
}

fn mac_feasibility(runs: &[OptimizerRun]) -> Outcome {
    let (_, tx) = multicast_instance();
    let mut checked = 0;
    for (i, r) in runs.iter().enumerate() {
        for sol in [&r.cov_identity, &r.cov_warm] {
            if !sol.converged {
                continue;
            }
            checked += 1;
            ensure(verify_mac_feasibility(&r.channels, &tx, &sol.covariances, sol.rate, r.p_t, 1.0), || {
                format!("instance {i}: rate {} infeasible", sol.rate)
            })?;
        }
    }
    ensure(checked > 0, || "no converged covariance output".into())?;
    Ok(format!("{checked} converged outputs feasible"))
}

// --- 8 -------------------------------------------------------------------

fn scheme_ordering() -> Outcome {
    let mut details = Vec::new();
    for (l, g, omega) in [(4, 2, 3), (2, 2, 2)] {
        let mean = |scheme| -> Result<f64, String> {
            let rows = run_experiment(&spec(10, l, g, scheme, omega, None, &[10.0], 50, 8)).map_err(|e| e.to_string())?;
            Ok(rows[0].r_sym_mean)
        };
        let mc = mean(Scheme::McLin)?;
        let uc = mean(Scheme::UcLin)?;
        ensure(mc >= uc, || format!("(L={l},G={g},omega={omega}) MC {mc} < UC {uc}"))?;
        details.push(format!("(L={l},G={g},omega={omega}) MC {mc:.4} >= UC {uc:.4}"));
    }
    Ok(details.join(", "))
}

// --- 9 -------------------------------------------------------------------

fn solver_agreement() -> Outcome {
    let shapes = [
        (Scheme::McLin, 2, 2, 2),
        (Scheme::McLin, 4, 2, 3),
        (Scheme::UcLin, 3, 2, 3),
        (Scheme::UcLin, 2, 1, 2),
        (Scheme::McLin, 3, 1, 2),
    ];
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for (i, &(scheme, l, g, omega)) in shapes.iter().enumerate() {
        let s = spec(10, l, g, scheme, omega, None, &[10.0], 1, 0);
        let resolved = resolve(&s).map_err(|e| e.to_string())?;
        let users: Vec<usize> = (1..=omega).collect();
        let tx = transmissions_for(scheme, &resolved, &users, 1, &mut SubpacketLedger::default()).map_err(|e| e.to_string())?.remove(0);
        for seed in 0..4u64 {
            let ch = sample_channels(&s.config, &users, 100 * i as u64 + seed);
            let p_t = db_to_linear(10.0);
            let run = |solver| optimize_linear(&ch, &tx, p_t, 1.0, &LinearOptions { solver, ..LinearOptions::default() });
            let kkt = run(TransmitSolver::Kkt).map_err(|e| e.to_string())?.r_c();
            let generic = run(TransmitSolver::Generic).map_err(|e| e.to_string())?.r_c();
            let rel = (kkt - generic).abs() / generic.abs().max(1e-12);
            worst = worst.max(rel);
            count += 1;
            ensure(rel <= 0.02, || format!("{scheme} L={l} G={g} omega={omega} seed={seed}: kkt {kkt} vs generic {generic}"))?;
        }
    }
    Ok(format!("{count} instances, max relative gap {worst:.3e}"))
}

// --- 10 ------------------------------------------------------------------

fn mmse_properties() -> Outcome {
    let (s, tx) = multicast_instance();
    let mut worst_identity: f64 = 0.0;
    let mut streams = 0;
    for seed in 0..10u64 {
        let ch = sample_channels(&s.config, &tx.users, seed);
        let mut rng = user_stream(seed, 77);
        let w: Vec<CVector> = tx.streams.iter().map(|_| CVector::from_fn(4, |_, _| complex_gaussian(&mut rng))).collect();
        let rx = mmse_receivers(&ch, &tx, &w, 1.0);
        for (&(k, d), u) in &rx {
            let gamma = mmse_sinr(&ch, &tx, &w, 1.0, k, d);
            let eps = stream_mse(&ch, &tx, &w, u, 1.0, k, d);
            worst_identity = worst_identity.max((eps - 1.0 / (1.0 + gamma)).abs());
            for _ in 0..1000 {
                let v = CVector::from_fn(ch.h(k).nrows(), |_, _| complex_gaussian(&mut rng));
                let other = stream_sinr(&ch, &tx, &w, &v, 1.0, k, d);
                ensure(other <= gamma * (1.0 + 1e-9), || format!("seed {seed} user {k} stream {d}: random {other} > mmse {gamma}"))?;
            }
            streams += 1;
        }
    }
    ensure(worst_identity <= 1e-10, || format!("max |eps - 1/(1+gamma)| = {worst_identity:e}"))?;
    Ok(format!("{streams} streams, max identity error {worst_identity:.2e}"))
}

// --- 12 ------------------------------------------------------------------

fn water_filling() -> Outcome {
    let cfg = NetworkConfig::with_gain(10, 4, 4, 0, 1.0, 1.0).map_err(|e| e.to_string())?;
    let s = ExperimentSpec { config: cfg.clone(), scheme: Scheme::McCov, omega: Some(1), beta: Some(1), snr_grid_db: vec![10.0], realizations: 1, seed: 0, eval_mode: EvalMode::Representative };
    let resolved = resolve(&s).map_err(|e| e.to_string())?;
    let tx = transmissions_for(Scheme::McCov, &resolved, &[1], 0, &mut SubpacketLedger::default()).map_err(|e| e.to_string())?.remove(0);
    let p_t = db_to_linear(10.0);
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let ch = sample_channels(&cfg, &[1], seed);
        let sol = optimize_covariances(&ch, &tx, p_t, 1.0, &CovOptions::default()).map_err(|e| e.to_string())?;
        let cap = water_filling_capacity(ch.h(1), p_t, 1.0);
        worst = worst.max((sol.rate - cap).abs());
        ensure((sol.rate - cap).abs() <= 1e-4, || format!("seed {seed}: {} vs water-filling {cap}", sol.rate))?;
    }
    Ok(format!("20 seeds, max |R - C| = {worst:.2e}"))
}

// --- 13 ------------------------------------------------------------------

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cases = [
        spec(6, 4, 2, Scheme::McLin, 3, None, &[0.0, 10.0], 4, 42),
        spec(6, 3, 2, Scheme::UcZf, 3, None, &[10.0, 20.0], 6, 42),
        spec(6, 4, 2, Scheme::McCov, 3, None, &[10.0], 3, 7),
    ];
    let mut files = 0;
    for (i, s) in cases.iter().enumerate() {
        for format in [OutputFormat::Csv, OutputFormat::Json] {
            let mut bytes = Vec::new();
            for (j, parallel) in [true, true, false].into_iter().enumerate() {
                let rows: Vec<ResultRow> = run_experiment_with(s, parallel).map_err(|e| e.to_string())?;
                let path = dir.path().join(format!("{i}-{j}-{format:?}"));
                emit_results(&rows, &path, format).map_err(|e| e.to_string())?;
                bytes.push(std::fs::read(&path).map_err(|e| e.to_string())?);
            }
            ensure(bytes.windows(2).all(|w| w[0] == w[1]), || format!("case {i} {format:?}: files differ"))?;
            files += 1;
        }
    }
    Ok(format!("{files} file triples byte-identical (parallel, parallel, serial)"))
}

// -------------------------------------------------------------------------

/// Criterion ids selected by `ACCEPTANCE_ONLY` (comma-separated); all when unset.
fn selected(id: usize) -> bool {
    match std::env::var("ACCEPTANCE_ONLY") {
        Ok(list) => list.split(',').any(|s| s.trim().parse() == Ok(id)),
        Err(_) => true,
    }
}

fn report(results: &mut Vec<bool>, id: usize, name: &str, limit: Option<Duration>, f: impl FnOnce() -> Outcome) {
    if !selected(id) {
        return;
    }
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
        Err(format!("panicked: {}", msg.unwrap_or_default()))
    });
    let elapsed = start.elapsed();
    let outcome = match (outcome, limit) {
        (Ok(_), Some(lim)) if elapsed > lim => Err(format!("runtime {:.2}s exceeds {:.0}s", elapsed.as_secs_f64(), lim.as_secs_f64())),
        (o, _) => o,
    };
    let (passed, detail) = match outcome {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    println!("{} {:>2} {name} [{:.2}s]: {detail}", if passed { "PASS" } else { "FAIL" }, id, elapsed.as_secs_f64());
    results.push(passed);
}

fn main() {
    let secs = |s| Some(Duration::from_secs(s));
    let mut results = Vec::new();
    report(&mut results, 1, "dof exactness", secs(1), dof_exactness);
    report(&mut results, 2, "scheduling exactness", secs(30), scheduling_exactness);
    report(&mut results, 3, "divisibility", None, divisibility);
    report(&mut results, 4, "zf interference nulling", secs(10), zf_nulling);
    report(&mut results, 5, "zf dof slope", secs(120), zf_slope);

    let start = Instant::now();
    let runs = if [6, 7, 11].into_iter().any(selected) { optimizer_runs() } else { Ok(Vec::new()) };
    let shared = start.elapsed();
    match runs {
        Ok(runs) => {
            println!("     (optimizer instances computed in {:.2}s)", shared.as_secs_f64());
            report(&mut results, 6, "sca monotonicity", None, || sca_monotonicity(&runs));
            report(&mut results, 7, "relaxation ordering", None, || relaxation_ordering(&runs));
            report(&mut results, 11, "mac feasibility", None, || mac_feasibility(&runs));
        }
        Err(e) => {
            for (id, name) in [(6, "sca monotonicity"), (7, "relaxation ordering"), (11, "mac feasibility")] {
                report(&mut results, id, name, None, || Err(e.clone()));
            }
        }
    }

    report(&mut results, 8, "scheme ordering", None, scheme_ordering);
    report(&mut results, 9, "solver cross-validation", None, solver_agreement);
    report(&mut results, 10, "mmse properties", None, mmse_properties);
    report(&mut results, 12, "water-filling oracle", None, water_filling);
    report(&mut results, 13, "determinism", None, determinism);

    let failed = results.iter().filter(|&&p| !p).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
