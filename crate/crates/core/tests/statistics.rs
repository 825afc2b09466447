//! Monte-Carlo behaviour of the empirical moments.

use orbit_core::experiment::{loglog_slope, median};
use orbit_core::model::{random_signal, So3Function};
use orbit_core::moments::{empirical_moments, population_second_moment};
use orbit_core::simulate::{estimate_rho_hat, NoiseModel, ObservationStream, Sampler};

#[test]
fn empirical_second_moment_converges_at_root_n() {
    let x = random_signal(2, 2, 3, false).unwrap();
    let f = So3Function::random(2, 4, false);
    let sampler = Sampler::Density(f);
    let rho = sampler.population_rho_hat(2).unwrap();
    let pop = population_second_moment(&rho, &x).unwrap();
    let ns = [500usize, 2000, 8000, 32000];
    let med: Vec<f64> = ns
        .iter()
        .map(|&n| {
            let errs: Vec<f64> = (0..7u64)
                .map(|s| {
                    let stream = ObservationStream::new(x.clone(), sampler.clone(), n, 0.0, NoiseModel::Circular, s).unwrap();
                    let (_, m2) = empirical_moments(&stream, 0.0, NoiseModel::Circular).unwrap();
                    m2.max_abs_diff(&pop).unwrap()
                })
                .collect();
            median(&errs).unwrap()
        })
        .collect();
    let nf: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let slope = loglog_slope(&nf, &med).unwrap();
    assert!((-0.7..=-0.3).contains(&slope), "slope {slope}, medians {med:?}");
}

#[test]
fn band_one_estimator_variance_under_uniform_rotations() {
    // E||rho_n - rho||_F^2 = (3 - ||rho||^2) / n, and rho = 0 for the uniform law
    let n = 400;
    let reps = 300;
    let mse: f64 = (0..reps)
        .map(|k| estimate_rho_hat(&Sampler::Uniform.sample(n, k).unwrap(), 1).unwrap().norm_squared())
        .sum::<f64>()
        / reps as f64;
    let want = 3.0 / n as f64;
    assert!((mse / want - 1.0).abs() < 0.2, "{mse} vs {want}");
}
