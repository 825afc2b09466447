use std::f64::consts::{PI, TAU};

use gauss_quad::legendre::GaussLegendre;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::harmonics::{wigner_table, Rotation};
use crate::model::{density_distribution, Distribution, So3Function};
use crate::reduce::tree_map_reduce;

/// Generator for draw `index` under `seed`. Each index owns an independent ChaCha8 stream, so
/// draws can be produced in any order or in parallel.
pub fn index_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// SplitMix64 finalizer applied to `base` offset by `tag`; used to derive independent seeds.
pub fn derive_seed(base: u64, tag: u64) -> u64 {
    let mut z = base.wrapping_add(tag.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Law of the tilt (beta, gamma) for in-plane-uniform samplers; alpha is always uniform.
#[derive(Debug, Clone, PartialEq)]
pub enum Tilt {
    /// beta and gamma as in the Haar measure (the result is uniform overall).
    Haar,
    /// beta, gamma ~ N(0, tau^2).
    GaussianEuler { tau: f64 },
    /// gamma ~ U[0, eta pi), beta Haar.
    Restricted { eta: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Sampler {
    Uniform,
    /// alpha, gamma ~ U[0, eta pi), beta = arccos(1 - 2u).
    Restricted { eta: f64 },
    /// alpha, beta, gamma ~ N(0, tau^2), then canonicalized.
    GaussianEuler { tau: f64 },
    /// alpha ~ U[0, 2 pi) independent of the tilt. Fourier matrices keep only column m' = 0.
    InPlane { tilt: Tilt },
    /// Rejection sampling from the density proportional to |f|^2.
    Density(So3Function),
}

fn check_eta(eta: f64) -> Result<()> {
    if eta.is_finite() && eta > 0.0 && eta <= 2.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("eta must lie in (0, 2], got {eta}")))
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau.is_finite() && tau >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("tau must be finite and nonnegative, got {tau}")))
    }
}

fn haar_beta<R: Rng>(rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    (1.0 - 2.0 * u).clamp(-1.0, 1.0).acos()
}

fn normal<R: Rng>(rng: &mut R, sd: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    sd * z
}

fn haar<R: Rng>(rng: &mut R) -> Rotation {
    let a = rng.random::<f64>() * TAU;
    let b = haar_beta(rng);
    let g = rng.random::<f64>() * TAU;
    Rotation::new(a, b, g)
}

impl Sampler {
    pub fn validate(&self) -> Result<()> {
        match self {
            Sampler::Uniform => Ok(()),
            Sampler::Restricted { eta } => check_eta(*eta),
            Sampler::GaussianEuler { tau } => check_tau(*tau),
            Sampler::InPlane { tilt } => match tilt {
                Tilt::Haar => Ok(()),
                Tilt::GaussianEuler { tau } => check_tau(*tau),
                Tilt::Restricted { eta } => check_eta(*eta),
            },
            Sampler::Density(f) => {
                if f.is_zero() {
                    Err(Error::InvalidArgument("density sampler needs a nonzero function".into()))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Short descriptor of the law and its parameters.
    pub fn tag(&self) -> String {
        match self {
            Sampler::Uniform => "uniform".into(),
            Sampler::Restricted { eta } => format!("restricted(eta={eta})"),
            Sampler::GaussianEuler { tau } => format!("gaussian-euler(tau={tau})"),
            Sampler::InPlane { tilt } => match tilt {
                Tilt::Haar => "inplane-uniform(tilt=haar)".into(),
                Tilt::GaussianEuler { tau } => format!("inplane-uniform(tilt=gaussian-euler(tau={tau}))"),
                Tilt::Restricted { eta } => format!("inplane-uniform(tilt=restricted(eta={eta}))"),
            },
            Sampler::Density(f) => format!("density(degree={})", f.degree()),
        }
    }

    pub fn is_in_plane(&self) -> bool {
        matches!(self, Sampler::InPlane { .. } | Sampler::Uniform)
    }

    /// Draw number `index` under `seed`.
    pub fn rotation(&self, seed: u64, index: u64) -> Rotation {
        let mut rng = index_rng(seed, index);
        match self {
            Sampler::Uniform => haar(&mut rng),
            Sampler::Restricted { eta } => {
                let a = rng.random::<f64>() * eta * PI;
                let g = rng.random::<f64>() * eta * PI;
                let b = haar_beta(&mut rng);
                Rotation::new(a, b, g)
            }
            Sampler::GaussianEuler { tau } => {
                let a = normal(&mut rng, *tau);
                let b = normal(&mut rng, *tau);
                let g = normal(&mut rng, *tau);
                Rotation::new(a, b, g)
            }
            Sampler::InPlane { tilt } => {
                let a = rng.random::<f64>() * TAU;
                let (b, g) = match tilt {
                    Tilt::Haar => (haar_beta(&mut rng), rng.random::<f64>() * TAU),
                    Tilt::GaussianEuler { tau } => (normal(&mut rng, *tau), normal(&mut rng, *tau)),
                    Tilt::Restricted { eta } => {
                        let g = rng.random::<f64>() * eta * PI;
                        (haar_beta(&mut rng), g)
                    }
                };
                Rotation::new(a, b, g)
            }
            Sampler::Density(f) => {
                let bound = f.sup_bound().powi(2);
                loop {
                    let g = haar(&mut rng);
                    let u: f64 = rng.random();
                    if u * bound <= f.eval(&g).norm_sqr() {
                        break g;
                    }
                }
            }
        }
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<RotationSample> {
        self.validate()?;
        let rotations = (0..n as u64).into_par_iter().map(|i| self.rotation(seed, i)).collect();
        Ok(RotationSample {
            rotations,
            sampler_tag: self.tag(),
        })
    }

    /// Exact Fourier matrices of the law, through band `l_max`.
    pub fn population_rho_hat(&self, l_max: usize) -> Result<Distribution> {
        self.validate()?;
        let rows_cols = |f: &dyn Fn(i64, i64, usize) -> Complex64| -> Result<Distribution> {
            let bands = (0..=l_max)
                .map(|l| {
                    let j = l as i64;
                    DMatrix::from_fn(2 * l + 1, 2 * l + 1, |r, c| f(r as i64 - j, c as i64 - j, l))
                })
                .collect();
            Distribution::new(bands)
        };
        match self {
            Sampler::Uniform => Ok(Distribution::uniform(l_max)),
            Sampler::Restricted { eta } => {
                let dbar = haar_mean_small_d(l_max);
                rows_cols(&|a, b, l| {
                    let j = l as i64;
                    uniform_char(b, *eta) * dbar[l][((b + j) as usize, (a + j) as usize)] * uniform_char(a, *eta)
                })
            }
            Sampler::GaussianEuler { tau } => {
                let dbar = gaussian_mean_small_d(l_max, *tau);
                rows_cols(&|a, b, l| {
                    let j = l as i64;
                    let w = (-0.5 * tau * tau * (a * a + b * b) as f64).exp();
                    Complex64::new(w * dbar[l][((b + j) as usize, (a + j) as usize)], 0.0)
                })
            }
            Sampler::InPlane { tilt } => {
                let (dbar, gamma_char): (Vec<DMatrix<f64>>, Box<dyn Fn(i64) -> Complex64>) = match tilt {
                    Tilt::Haar => (haar_mean_small_d(l_max), Box::new(|a| uniform_char(a, 2.0))),
                    Tilt::GaussianEuler { tau } => {
                        let t = *tau;
                        (
                            gaussian_mean_small_d(l_max, t),
                            Box::new(move |a: i64| Complex64::new((-0.5 * t * t * (a * a) as f64).exp(), 0.0)),
                        )
                    }
                    Tilt::Restricted { eta } => {
                        let e = *eta;
                        (haar_mean_small_d(l_max), Box::new(move |a| uniform_char(a, e)))
                    }
                };
                rows_cols(&|a, b, l| {
                    if b != 0 {
                        return Complex64::new(0.0, 0.0);
                    }
                    let j = l as i64;
                    dbar[l][(j as usize, (a + j) as usize)] * gamma_char(a)
                })
            }
            Sampler::Density(f) => density_distribution(f, l_max, 2 * f.degree() + l_max),
        }
    }
}

/// E[e^{i k t}] for t ~ U[0, eta pi).
fn uniform_char(k: i64, eta: f64) -> Complex64 {
    if k == 0 {
        return Complex64::new(1.0, 0.0);
    }
    let x = k as f64 * eta * PI;
    (Complex64::from_polar(1.0, x) - 1.0) / Complex64::new(0.0, x)
}

/// E[d^l(beta)] for beta with density sin(beta)/2 on [0, pi].
fn haar_mean_small_d(l_max: usize) -> Vec<DMatrix<f64>> {
    let table = wigner_table(l_max);
    let rule = GaussLegendre::new(64).expect("degree >= 2");
    let mut acc: Vec<DMatrix<f64>> = (0..=l_max).map(|l| DMatrix::zeros(2 * l + 1, 2 * l + 1)).collect();
    for &(x, w) in rule.as_node_weight_pairs() {
        let beta = 0.5 * PI * (x + 1.0);
        let wt = w * 0.5 * PI * 0.5 * beta.sin();
        for (a, d) in acc.iter_mut().zip(table.small_d_all(l_max, beta)) {
            *a += d * wt;
        }
    }
    acc
}

/// E[d^l(beta)] for beta ~ N(0, tau^2), by composite Gauss-Legendre over +-12 tau.
fn gaussian_mean_small_d(l_max: usize, tau: f64) -> Vec<DMatrix<f64>> {
    let table = wigner_table(l_max);
    if tau == 0.0 {
        return table.small_d_all(l_max, 0.0);
    }
    let rule = GaussLegendre::new(16).expect("degree >= 2");
    let half = 12.0 * tau;
    let panels = (8.0 * half).ceil().max(16.0) as usize;
    let h = 2.0 * half / panels as f64;
    let norm = 1.0 / (tau * (TAU).sqrt());
    let mut acc: Vec<DMatrix<f64>> = (0..=l_max).map(|l| DMatrix::zeros(2 * l + 1, 2 * l + 1)).collect();
    for p in 0..panels {
        let lo = -half + p as f64 * h;
        for &(x, w) in rule.as_node_weight_pairs() {
            let beta = lo + 0.5 * h * (x + 1.0);
            let wt = w * 0.5 * h * norm * (-0.5 * (beta / tau).powi(2)).exp();
            for (a, d) in acc.iter_mut().zip(table.small_d_all(l_max, beta)) {
                *a += d * wt;
            }
        }
    }
    acc
}

/// A batch of rotations with a descriptor of the law that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationSample {
    pub rotations: Vec<Rotation>,
    pub sampler_tag: String,
}

impl RotationSample {
    pub fn len(&self) -> usize {
        self.rotations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rotations.is_empty()
    }
}

pub fn sample_uniform(n: usize, seed: u64) -> RotationSample {
    Sampler::Uniform.sample(n, seed).expect("uniform sampler has no parameters")
}

pub fn sample_gaussian_euler(tau: f64, n: usize, seed: u64) -> Result<RotationSample> {
    Sampler::GaussianEuler { tau }.sample(n, seed)
}

pub fn sample_restricted(eta: f64, n: usize, seed: u64) -> Result<RotationSample> {
    Sampler::Restricted { eta }.sample(n, seed)
}

pub fn sample_inplane(tilt: Tilt, n: usize, seed: u64) -> Result<RotationSample> {
    Sampler::InPlane { tilt }.sample(n, seed)
}

pub fn sample_density(f: &So3Function, n: usize, seed: u64) -> Result<RotationSample> {
    Sampler::Density(f.clone()).sample(n, seed)
}

const RHO_CHUNK: usize = 1024;

/// (1/n) sum_i D^l(g_i)^H.
pub fn estimate_rho_hat(rotations: &RotationSample, l: usize) -> Result<DMatrix<Complex64>> {
    Ok(estimate_rho_hat_all(rotations, l)?.swap_remove(l))
}

/// Estimates for every band 0..=l_max in one pass.
pub fn estimate_rho_hat_all(rotations: &RotationSample, l_max: usize) -> Result<Vec<DMatrix<Complex64>>> {
    let n = rotations.len();
    if n == 0 {
        return Err(Error::InvalidArgument("estimate_rho_hat: empty rotation sample".into()));
    }
    let table = wigner_table(l_max);
    let sum = tree_map_reduce(
        n,
        RHO_CHUNK,
        |r| {
            let mut acc: Vec<DMatrix<Complex64>> = (0..=l_max).map(|l| DMatrix::zeros(2 * l + 1, 2 * l + 1)).collect();
            for g in &rotations.rotations[r] {
                for (a, d) in acc.iter_mut().zip(table.big_d_all(l_max, g)) {
                    *a += d;
                }
            }
            acc
        },
        |mut a, b| {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
            a
        },
    )
    .expect("nonempty");
    let inv = Complex64::new(1.0 / n as f64, 0.0);
    Ok(sum.into_iter().map(|s| s.adjoint() * inv).collect())
}

/// Estimated distribution through band l_max (band 0 is exactly 1).
pub fn estimate_distribution(rotations: &RotationSample, l_max: usize) -> Result<Distribution> {
    Distribution::new(estimate_rho_hat_all(rotations, l_max)?)
}
