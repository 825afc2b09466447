use orbit_core::model::{
    distribution_from_json, distribution_to_json, random_distribution, random_signal, signal_from_json,
    signal_to_json,
};
use orbit_core::moments::{
    empirical_moments, moments_from_json, moments_to_json, population_first_moment, population_second_moment,
};
use orbit_core::simulate::{
    generate_observations, observations_from_json, observations_to_json, NoiseModel, Sampler,
};
use orbit_core::Complex64;

fn bits(z: &[Complex64]) -> Vec<(u64, u64)> {
    z.iter().map(|c| (c.re.to_bits(), c.im.to_bits())).collect()
}

#[test]
fn fifty_objects_round_trip_bitwise() {
    let mut count = 0;
    for seed in 0..10u64 {
        let l = 1 + (seed as usize % 4);
        let r = 1 + (seed as usize % 3);
        let x = random_signal(l, r, seed, seed % 2 == 0).unwrap();
        let rho = random_distribution(l, seed + 100, seed % 3 == 0);

        let x2 = signal_from_json(&signal_to_json(&x)).unwrap();
        assert_eq!(x, x2);
        let rho2 = distribution_from_json(&distribution_to_json(&rho)).unwrap();
        assert_eq!(rho, rho2);

        let m1 = population_first_moment(&rho, &x).unwrap();
        let m2 = population_second_moment(&rho, &x).unwrap();
        let (a1, a2) = moments_from_json(&moments_to_json(&m1, &m2).unwrap()).unwrap();
        for ll in 0..=l {
            assert_eq!(bits(a1.band(ll).as_slice()), bits(m1.band(ll).as_slice()));
        }
        for (t, v) in m2.iter() {
            assert_eq!(bits(a2.component(t.0, t.1, t.2).unwrap()), bits(v));
        }

        let rot = Sampler::GaussianEuler { tau: 0.7 }.sample(7, seed).unwrap();
        let noise = if seed % 2 == 0 { NoiseModel::Circular } else { NoiseModel::RealSymmetric };
        let obs = generate_observations(&x, &rot, 0.3, noise, seed).unwrap();
        let obs2 = observations_from_json(&observations_to_json(&obs)).unwrap();
        assert_eq!(obs, obs2);

        // moments carry their provenance fields through the file
        let (e1, e2) = empirical_moments(&obs, 0.3, noise).unwrap();
        let (b1, b2) = moments_from_json(&moments_to_json(&e1, &e2).unwrap()).unwrap();
        assert_eq!((b1.n_used, b2.n_used, b2.sigma_used), (e1.n_used, e2.n_used, e2.sigma_used));
        assert_eq!(e2.max_abs_diff(&b2).unwrap(), 0.0);
        count += 5;
    }
    assert_eq!(count, 50);
}
