use orbit_core::experiment::{run_experiment, ExperimentConfig, ExperimentKind};
use orbit_core::harmonics::Rotation;
use orbit_core::model::{random_distribution, random_signal, Distribution, Signal};
use orbit_core::moments::{population_first_moment, population_second_moment};
use orbit_core::recover::{frequency_march, BaseMode, GroundTruth, Recovery, RecoveryOptions, SignalRowSet};

fn march(x: &Signal, rho: &Distribution, opts: &RecoveryOptions) -> Recovery {
    let m1 = population_first_moment(rho, x).unwrap();
    let m2 = population_second_moment(rho, x).unwrap();
    let truth = GroundTruth {
        signal: x.clone(),
        distribution: Some(rho.clone()),
    };
    frequency_march(&m1, &m2, opts, Some(&truth)).unwrap()
}

fn oracle() -> RecoveryOptions {
    RecoveryOptions {
        mode: BaseMode::Oracle,
        ..RecoveryOptions::default()
    }
}

#[test]
fn oracle_recovery_error_is_bounded_by_conditioning() {
    // Errors compound along the march, so the bound carries a generous constant in front of
    // cond * eps; it still sits some nine orders of magnitude below any statistical error.
    for &(l, r) in &[(3usize, 3usize), (3, 5), (5, 3), (5, 5), (8, 3), (8, 5)] {
        for seed in 0..20u64 {
            let x = random_signal(l, r, seed, false).unwrap();
            let rho = random_distribution(l, seed + 1000, false);
            let rec = march(&x, &rho, &oracle());
            let bound = 1e4 * rec.report.max_condition() * f64::EPSILON;
            let (ex, er) = (rec.report.signal_error.unwrap(), rec.report.distribution_error.unwrap());
            assert!(ex < bound && er < bound, "L={l} R={r} seed={seed}: {ex:e} {er:e} vs {bound:e}");
            assert!(!rec.report.failed());
        }
    }
}

#[test]
fn blind_recovery_grams_are_rotation_invariant() {
    for seed in 0..5u64 {
        let x = random_signal(4, 4, seed, true).unwrap();
        let rho = random_distribution(4, seed + 7, false);
        let h = Rotation::new(0.3 + seed as f64, 1.1, 2.0 - 0.2 * seed as f64);
        let a = march(&x, &rho, &RecoveryOptions::default());
        let b = march(&x.rotated(&h), &rho.transported(&h), &RecoveryOptions::default());
        for (p, q) in a.signal.grams().iter().zip(b.signal.grams()) {
            assert!((p - &q).norm() < 1e-8 * p.norm().max(1.0));
        }
        assert!(a.report.signal_error.unwrap() < 1e-8);
    }
}

#[test]
fn full_rows_recover_in_plane_with_three_shells() {
    let x = random_signal(4, 3, 11, false).unwrap();
    let rho = random_distribution(4, 12, true);
    let opts = RecoveryOptions {
        in_plane: true,
        signal_rows: SignalRowSet::Full,
        ..oracle()
    };
    let rec = march(&x, &rho, &opts);
    assert!(rec.report.signal_error.unwrap() < 1e-8);
}

#[test]
fn ablations_still_recover_generic_pairs() {
    let x = random_signal(5, 3, 21, false).unwrap();
    let rho = random_distribution(5, 22, false);
    for opts in [
        RecoveryOptions {
            include_l1_equal_l: false,
            ..oracle()
        },
        RecoveryOptions {
            append_first_moment_rows: true,
            ..oracle()
        },
    ] {
        let rec = march(&x, &rho, &opts);
        assert!(rec.report.signal_error.unwrap() < 1e-8, "{opts:?}");
        assert!(rec.report.distribution_error.unwrap() < 1e-8, "{opts:?}");
    }
}

#[test]
fn error_grows_with_noise() {
    let mut cfg = ExperimentConfig::new(ExperimentKind::SnrSweep);
    cfg.l_max = 3;
    cfg.shells = 3;
    cfg.n = 4000;
    cfg.snr_grid = vec![10.0, 3.0, 1.0, 0.3, 0.1];
    let t = run_experiment(&cfg).unwrap();
    let med: Vec<f64> = t.median_errors().into_iter().map(|e| e.unwrap()).collect();
    assert!(med.windows(2).all(|w| w[0] <= w[1]), "{med:?}");
}
