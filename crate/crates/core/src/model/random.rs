use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{czero, Distribution, Signal};
use crate::error::{Error, Result};
use crate::harmonics::{wigner_table, Rotation};
use crate::quadrature::QuadratureGrid;

/// Complex Gaussian with E|z|^2 = 1.
pub(crate) fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// I.i.d. standard complex Gaussian coefficients.
///
/// With `real_symmetric` the draw is projected onto x_{-m} = (-1)^m conj(x_m) and scaled by
/// sqrt(2), which keeps E|x_m|^2 = 1 for every coefficient.
pub fn random_signal(l_max: usize, shells: usize, seed: u64, real_symmetric: bool) -> Result<Signal> {
    if shells == 0 {
        return Err(Error::InvalidArgument("random_signal: R must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bands = (0..=l_max)
        .map(|l| DMatrix::from_fn(2 * l + 1, shells, |_, _| complex_normal(&mut rng)))
        .collect();
    let x = Signal::new(bands)?;
    Ok(if real_symmetric {
        x.symmetrize().scale(std::f64::consts::SQRT_2)
    } else {
        x
    })
}

const MIN_SINGULAR: f64 = 1e-3;

/// Generic Fourier matrices: complex Gaussian entries scaled by 1/(2l+1), redrawn until
/// invertible with smallest singular value above 1e-3.
///
/// With `in_plane` only column m' = 0 is kept and it is redrawn until its norm exceeds 1e-3.
/// These need not be the coefficients of a real or nonnegative density.
pub fn random_distribution(l_max: usize, seed: u64, in_plane: bool) -> Distribution {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bands = vec![DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0))];
    for l in 1..=l_max {
        let w = 2 * l + 1;
        let scale = 1.0 / w as f64;
        loop {
            let mut b = DMatrix::from_fn(w, w, |_, _| complex_normal(&mut rng) * scale);
            let ok = if in_plane {
                for c in 0..w {
                    if c != l {
                        b.column_mut(c).fill(czero());
                    }
                }
                b.column(l).norm() > MIN_SINGULAR
            } else {
                b.clone().singular_values().min() > MIN_SINGULAR
            };
            if ok {
                bands.push(b);
                break;
            }
        }
    }
    Distribution::new(bands).expect("band 0 is one")
}

/// A band-limited function on SO(3), f(g) = sum_l sum_{m,m'} c^l_{m,m'} D^l_{m,m'}(g).
#[derive(Debug, Clone, PartialEq)]
pub struct So3Function {
    bands: Vec<DMatrix<Complex64>>,
}

impl So3Function {
    pub fn new(bands: Vec<DMatrix<Complex64>>) -> Result<Self> {
        if bands.is_empty() {
            return Err(Error::InvalidArgument("function needs at least band 0".into()));
        }
        for (l, b) in bands.iter().enumerate() {
            if b.nrows() != 2 * l + 1 || b.ncols() != 2 * l + 1 {
                return Err(Error::ShapeMismatch(format!("coefficient band {l} is {}x{}", b.nrows(), b.ncols())));
            }
        }
        Ok(So3Function { bands })
    }

    pub fn constant(c: f64) -> Self {
        So3Function {
            bands: vec![DMatrix::from_element(1, 1, Complex64::new(c, 0.0))],
        }
    }

    /// Random coefficients up to `degree`. With `in_plane` only row m = 0 is populated, which
    /// makes f independent of alpha.
    pub fn random(degree: usize, seed: u64, in_plane: bool) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bands = (0..=degree)
            .map(|l| {
                let w = 2 * l + 1;
                DMatrix::from_fn(w, w, |r, _| {
                    let z = complex_normal(&mut rng);
                    if in_plane && r != l {
                        czero()
                    } else {
                        z
                    }
                })
            })
            .collect();
        So3Function { bands }
    }

    pub fn degree(&self) -> usize {
        self.bands.len() - 1
    }

    pub fn bands(&self) -> &[DMatrix<Complex64>] {
        &self.bands
    }

    pub fn is_zero(&self) -> bool {
        self.bands.iter().all(|b| b.iter().all(|z| *z == czero()))
    }

    /// Crude bound sup |f| <= sum |c| (Wigner entries have modulus at most 1).
    pub fn sup_bound(&self) -> f64 {
        self.bands.iter().flat_map(|b| b.iter()).map(|z| z.norm()).sum()
    }

    pub fn eval(&self, g: &Rotation) -> Complex64 {
        let d = wigner_table(self.degree()).big_d_all(self.degree(), g);
        self.eval_with(&d)
    }

    pub(crate) fn eval_with(&self, d: &[DMatrix<Complex64>]) -> Complex64 {
        self.bands
            .iter()
            .zip(d)
            .map(|(c, d)| c.iter().zip(d.iter()).map(|(a, b)| a * b).sum::<Complex64>())
            .sum()
    }
}

/// Fourier matrices of the density rho(g) = |f(g)|^2 / int |f|^2.
///
/// `quad_band` is the total band the quadrature must integrate exactly and must be at least
/// 2 deg(f) + L.
pub fn density_distribution(f: &So3Function, l_max: usize, quad_band: usize) -> Result<Distribution> {
    if f.is_zero() {
        return Err(Error::InvalidArgument("density_distribution: f is identically zero".into()));
    }
    let need = 2 * f.degree() + l_max;
    if quad_band < need {
        return Err(Error::InvalidArgument(format!(
            "density_distribution: quadrature band {quad_band} below the required {need}"
        )));
    }
    let grid = QuadratureGrid::for_band(quad_band);
    let top = l_max.max(f.degree());
    let table = wigner_table(top);
    let mut acc: Vec<DMatrix<Complex64>> = (0..=l_max).map(|l| DMatrix::zeros(2 * l + 1, 2 * l + 1)).collect();
    let mut z = 0.0;
    for (g, w) in grid.nodes() {
        let d = table.big_d_all(top, &g);
        let p = f.eval_with(&d).norm_sqr() * w;
        z += p;
        for (l, a) in acc.iter_mut().enumerate() {
            let dl = &d[l];
            let w = 2 * l + 1;
            for r in 0..w {
                for c in 0..w {
                    a[(r, c)] += dl[(c, r)].conj() * p;
                }
            }
        }
    }
    for a in acc.iter_mut() {
        *a /= Complex64::new(z, 0.0);
    }
    acc[0][(0, 0)] = Complex64::new(1.0, 0.0);
    Distribution::new(acc)
}
