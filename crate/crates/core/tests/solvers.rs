use cc_mimo::beamform::{optimize_linear, LinearOptions, SubpacketLedger, TransmitSolver};
use cc_mimo::channel::{db_to_linear, sample_channels};
use cc_mimo::covdesign::{
    from_beamformers, optimize_covariances, optimize_covariances_from, verify_mac_feasibility, CovOptions, CovProblem,
};
use cc_mimo::harness::{resolve, transmissions_for, EvalMode, ExperimentSpec, Scheme};
use cc_mimo::model::{NetworkConfig, Transmission};

fn instance(scheme: Scheme, l: usize, g: usize, omega: usize) -> (NetworkConfig, Transmission) {
    let s = ExperimentSpec {
        config: NetworkConfig::with_gain(8, l, g, 1, 1.0, 1.0).unwrap(),
        scheme,
        omega: Some(omega),
        beta: None,
        snr_grid_db: vec![10.0],
        realizations: 1,
        seed: 0,
        eval_mode: EvalMode::Representative,
    };
    let resolved = resolve(&s).unwrap();
    let users: Vec<usize> = (1..=omega).collect();
    let tx = transmissions_for(scheme, &resolved, &users, 1, &mut SubpacketLedger::default()).unwrap().remove(0);
    (s.config, tx)
}

#[test]
fn linear_design_respects_power_and_improves_monotonically() {
    let (config, tx) = instance(Scheme::McLin, 3, 2, 3);
    for seed in 0..3 {
        let ch = sample_channels(&config, &tx.users, seed);
        let p_t = db_to_linear(15.0);
        let sol = optimize_linear(&ch, &tx, p_t, 1.0, &LinearOptions::default()).unwrap();
        let power: f64 = sol.w.iter().map(|w| w.norm_squared()).sum();
        assert!(power <= p_t * (1.0 + 1e-9), "power {power} exceeds {p_t}");
        assert!(sol.history.windows(2).all(|h| h[1] >= h[0] - 1e-9), "{:?}", sol.history);
        assert!(sol.r_c() > 0.0);
    }
}

#[test]
fn kkt_and_generic_transmit_solvers_agree() {
    let (config, tx) = instance(Scheme::UcLin, 2, 1, 2);
    for seed in 10..13 {
        let ch = sample_channels(&config, &tx.users, seed);
        let run = |solver| {
            optimize_linear(&ch, &tx, db_to_linear(10.0), 1.0, &LinearOptions { solver, ..LinearOptions::default() })
                .unwrap()
                .r_c()
        };
        let (kkt, generic) = (run(TransmitSolver::Kkt), run(TransmitSolver::Generic));
        assert!((kkt - generic).abs() <= 0.02 * generic, "kkt {kkt} vs generic {generic}");
    }
}

#[test]
fn covariance_design_dominates_its_linear_start() {
    let (config, tx) = instance(Scheme::McLin, 3, 2, 3);
    let p_t = db_to_linear(20.0);
    for seed in 0..2 {
        let ch = sample_channels(&config, &tx.users, seed);
        let lin = optimize_linear(&ch, &tx, p_t, 1.0, &LinearOptions::default()).unwrap();
        let problem = CovProblem::new(&ch, &tx, p_t, 1.0).unwrap();
        let cov = optimize_covariances_from(&problem, from_beamformers(&lin.w), &CovOptions::default()).unwrap();
        assert!(cov.rate >= lin.r_c() - 1e-6, "cov {} < linear {}", cov.rate, lin.r_c());
        assert!(cov.covariances.total_power() <= p_t * (1.0 + 1e-9));
        assert!(verify_mac_feasibility(&ch, &tx, &cov.covariances, cov.rate, p_t, 1.0));
    }
}

#[test]
fn covariance_rate_grows_with_power() {
    let (config, tx) = instance(Scheme::McCov, 2, 2, 2);
    let ch = sample_channels(&config, &tx.users, 4);
    let rates: Vec<f64> = [0.0, 10.0, 20.0]
        .iter()
        .map(|&db| optimize_covariances(&ch, &tx, db_to_linear(db), 1.0, &CovOptions::default()).unwrap().rate)
        .collect();
    assert!(rates.windows(2).all(|r| r[1] > r[0]), "{rates:?}");
}
