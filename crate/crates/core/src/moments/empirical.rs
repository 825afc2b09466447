use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{admissible_triples, FirstMoment, SampleCount, SecondMoment};
use crate::error::{Error, Result};
use crate::harmonics::{cg_table, clebsch_gordan};
use crate::reduce::tree_map_reduce;
use crate::simulate::{Layout, NoiseModel, ObservationSource};

const CHUNK: usize = 384;

/// Running sums for sum_i w_i y_i and sum_i w_i y_i y_i^T (no conjugate).
///
/// The complex outer product is kept as two real matrices: re = Yr W Yr^T - Yi W Yi^T and
/// b = Yr W Yi^T, so that im = b + b^T.
pub(crate) struct Accumulator {
    sum: Vec<Complex64>,
    re: DMatrix<f64>,
    b: DMatrix<f64>,
}

impl Accumulator {
    /// `y` holds observations back to back, each of length `n`.
    pub(crate) fn from_block(y: &[Complex64], n: usize, weights: Option<&[f64]>) -> Self {
        let cnt = y.len() / n;
        let yr = DMatrix::from_iterator(n, cnt, y.iter().map(|z| z.re));
        let yi = DMatrix::from_iterator(n, cnt, y.iter().map(|z| z.im));
        let (yrw, yiw) = match weights {
            Some(w) => {
                let (mut a, mut b) = (yr.clone(), yi.clone());
                for (k, &wk) in w.iter().enumerate() {
                    a.column_mut(k).scale_mut(wk);
                    b.column_mut(k).scale_mut(wk);
                }
                (a, b)
            }
            None => (yr.clone(), yi.clone()),
        };
        let yrt = yr.transpose();
        let yit = yi.transpose();
        let mut re = DMatrix::zeros(n, n);
        re.gemm(1.0, &yrw, &yrt, 0.0);
        re.gemm(-1.0, &yiw, &yit, 1.0);
        let mut b = DMatrix::zeros(n, n);
        b.gemm(1.0, &yrw, &yit, 0.0);
        let mut sum = vec![Complex64::new(0.0, 0.0); n];
        for k in 0..cnt {
            let w = weights.map_or(1.0, |w| w[k]);
            for (s, v) in sum.iter_mut().zip(&y[k * n..(k + 1) * n]) {
                *s += v * w;
            }
        }
        Accumulator { sum, re, b }
    }

    pub(crate) fn merge(mut self, other: Accumulator) -> Self {
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        self.re += other.re;
        self.b += other.b;
        self
    }

    /// Divides by `total` and projects onto the isotypic components.
    pub(crate) fn finish(self, layout: Layout, total: f64, n_used: SampleCount) -> (FirstMoment, SecondMoment) {
        let inv = 1.0 / total;
        let mean: Vec<Complex64> = self.sum.iter().map(|z| z * inv).collect();
        let first = FirstMoment::new(layout.unpack(&mean), n_used);
        let s = |i: usize, j: usize| Complex64::new(self.re[(i, j)], self.b[(i, j)] + self.b[(j, i)]) * inv;
        let l_max = layout.l_max;
        let r = layout.shells;
        let cg = cg_table(l_max);
        let mut second = SecondMoment::zeros(l_max, r, n_used);
        for (l1, l2, l3) in admissible_triples(l_max) {
            let (j1, j2, j3) = (l1 as i64, l2 as i64, l3 as i64);
            let block = cg.block(l2, l3, l1).expect("triangle rule holds");
            let comp = second.component_mut((l1, l2, l3));
            for s2 in 0..r {
                let o2 = layout.block(l2, s2);
                for s3 in 0..r {
                    let o3 = layout.block(l3, s3);
                    for k2 in -j2..=j2 {
                        for k3 in -j3..=j3 {
                            let m = k2 + k3;
                            if m.abs() > j1 {
                                continue;
                            }
                            let c = block[((k2 + j2) * (2 * j3 + 1) + (k3 + j3)) as usize];
                            if c == 0.0 {
                                continue;
                            }
                            let v = s(o2 + (k2 + j2) as usize, o3 + (k3 + j3) as usize);
                            comp[((m + j1) as usize * r + s2) * r + s3] += v * c;
                        }
                    }
                }
            }
        }
        (first, second)
    }
}

/// E[e^l_k e^l_{-k} summed against <l k l -k|0 0>] for one shell: the additive bias noise leaves on
/// the (0; l, l)[0, s, s] entry of the raw second moment.
pub fn noise_bias(l: usize, sigma: f64, noise: NoiseModel) -> f64 {
    let j = l as i64;
    sigma
        * sigma
        * (-j..=j)
            .map(|k| clebsch_gordan(j, k, j, -k, 0, 0) * noise.pairing(k))
            .sum::<f64>()
}

fn accumulate(source: &dyn ObservationSource) -> Result<Accumulator> {
    let n = source.len();
    if n == 0 {
        return Err(Error::InvalidArgument("no observations".into()));
    }
    let w = source.layout().len();
    Ok(tree_map_reduce(
        n,
        CHUNK,
        |range| {
            let mut buf = vec![Complex64::new(0.0, 0.0); range.len() * w];
            source.fill(range, &mut buf);
            Accumulator::from_block(&buf, w, None)
        },
        Accumulator::merge,
    )
    .expect("n >= 1"))
}

/// Sample means of y and of the isotypic products, with the noise bias removed.
///
/// One pass over the source; streamed observations are generated exactly once.
pub fn empirical_moments(
    source: &dyn ObservationSource,
    sigma: f64,
    noise: NoiseModel,
) -> Result<(FirstMoment, SecondMoment)> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!("sigma must be finite and nonnegative, got {sigma}")));
    }
    let n = source.len();
    let layout = source.layout();
    let (first, mut second) = accumulate(source)?.finish(layout, n as f64, SampleCount::Samples(n as u64));
    if sigma > 0.0 {
        let r = layout.shells;
        for l in 0..=layout.l_max {
            let bias = noise_bias(l, sigma, noise);
            let comp = second.component_mut((0, l, l));
            for s in 0..r {
                comp[s * r + s] -= bias;
            }
        }
    }
    second.sigma_used = sigma;
    Ok((first, second))
}

pub fn empirical_first_moment(source: &dyn ObservationSource) -> Result<FirstMoment> {
    let n = source.len();
    if n == 0 {
        return Err(Error::InvalidArgument("no observations".into()));
    }
    let w = source.layout().len();
    let sum = tree_map_reduce(
        n,
        CHUNK,
        |range| {
            let mut buf = vec![Complex64::new(0.0, 0.0); range.len() * w];
            source.fill(range, &mut buf);
            let mut acc = vec![Complex64::new(0.0, 0.0); w];
            for y in buf.chunks(w) {
                for (a, v) in acc.iter_mut().zip(y) {
                    *a += v;
                }
            }
            acc
        },
        |mut a, b| {
            for (x, y) in a.iter_mut().zip(&b) {
                *x += y;
            }
            a
        },
    )
    .expect("n >= 1");
    let mean: Vec<Complex64> = sum.iter().map(|z| z / n as f64).collect();
    Ok(FirstMoment::new(source.layout().unpack(&mean), SampleCount::Samples(n as u64)))
}

pub fn empirical_second_moment(source: &dyn ObservationSource, sigma: f64, noise: NoiseModel) -> Result<SecondMoment> {
    empirical_moments(source, sigma, noise).map(|(_, m)| m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{random_signal, Distribution, Signal};
    use crate::moments::{population_first_moment, population_second_moment};
    use crate::simulate::{generate_observations, ObservationSet, RotationSample, Sampler};

    #[test]
    fn bias_has_closed_form() {
        for l in 0..6 {
            let want = if l % 2 == 0 { 1.0 } else { -1.0 } * ((2 * l + 1) as f64).sqrt() * 0.09;
            assert!((noise_bias(l, 0.3, NoiseModel::RealSymmetric) - want).abs() < 1e-13);
            assert_eq!(noise_bias(l, 0.3, NoiseModel::Circular), 0.0);
        }
    }

    #[test]
    fn delta_rotations_reproduce_population() {
        let x = random_signal(3, 2, 4, false).unwrap();
        let rot = RotationSample {
            rotations: vec![Default::default(); 7],
            sampler_tag: "identity".into(),
        };
        let obs = generate_observations(&x, &rot, 0.0, NoiseModel::Circular, 0).unwrap();
        let (m1, m2) = empirical_moments(&obs, 0.0, NoiseModel::Circular).unwrap();
        let rho = Distribution::identity(3);
        let p1 = population_first_moment(&rho, &x).unwrap();
        let p2 = population_second_moment(&rho, &x).unwrap();
        assert!((m1.as_signal().norm() - p1.as_signal().norm()).abs() < 1e-12);
        assert!(m2.max_abs_diff(&p2).unwrap() < 1e-12);
        assert_eq!(m2.n_used, SampleCount::Samples(7));
    }

    #[test]
    fn first_moment_paths_agree() {
        let x = random_signal(2, 2, 9, false).unwrap();
        let rot = Sampler::Uniform.sample(1000, 3).unwrap();
        let obs = generate_observations(&x, &rot, 0.5, NoiseModel::Circular, 1).unwrap();
        let a = empirical_first_moment(&obs).unwrap();
        let (b, _) = empirical_moments(&obs, 0.5, NoiseModel::Circular).unwrap();
        for l in 0..=2 {
            assert!((a.band(l) - b.band(l)).norm() < 1e-12);
        }
    }

    #[test]
    fn matches_direct_outer_products() {
        let x = random_signal(2, 2, 11, false).unwrap();
        let rot = Sampler::Uniform.sample(50, 5).unwrap();
        let obs = generate_observations(&x, &rot, 0.2, NoiseModel::Circular, 2).unwrap();
        let (_, m2) = empirical_moments(&obs, 0.0, NoiseModel::Circular).unwrap();
        let mut want = SecondMoment::zeros(2, 2, SampleCount::Samples(50));
        for i in 0..obs.n() {
            let y: Signal = obs.as_signal(i);
            let p = population_second_moment(&Distribution::identity(2), &y).unwrap();
            for (t, c) in p.iter() {
                for (a, b) in want.component_mut(*t).iter_mut().zip(c) {
                    *a += b / 50.0;
                }
            }
        }
        assert!(m2.max_abs_diff(&want).unwrap() < 1e-12);
    }

    #[test]
    fn pure_noise_is_debiased() {
        let x = Signal::zeros(2, 1);
        let rot = Sampler::Uniform.sample(20000, 1).unwrap();
        let obs: ObservationSet = generate_observations(&x, &rot, 1.0, NoiseModel::RealSymmetric, 3).unwrap();
        let (_, raw) = empirical_moments(&obs, 0.0, NoiseModel::RealSymmetric).unwrap();
        let (_, fixed) = empirical_moments(&obs, 1.0, NoiseModel::RealSymmetric).unwrap();
        for l in 0..=2 {
            let b = noise_bias(l, 1.0, NoiseModel::RealSymmetric);
            assert!((raw.entry(0, l, l, 0, 0, 0).re - b).abs() < 0.1);
            assert!(fixed.entry(0, l, l, 0, 0, 0).norm() < 0.1);
        }
    }

    #[test]
    fn converges_to_population() {
        let x = random_signal(2, 1, 13, false).unwrap();
        let rot = Sampler::GaussianEuler { tau: 0.6 }.sample(40000, 8).unwrap();
        let obs = generate_observations(&x, &rot, 0.0, NoiseModel::Circular, 0).unwrap();
        let (_, m2) = empirical_moments(&obs, 0.0, NoiseModel::Circular).unwrap();
        let pop = population_second_moment(&Sampler::GaussianEuler { tau: 0.6 }.population_rho_hat(2).unwrap(), &x)
            .unwrap();
        assert!(m2.max_abs_diff(&pop).unwrap() < 0.05 * pop.norm());
    }
}
