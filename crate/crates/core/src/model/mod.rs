//! Signals, distributions and the metrics used to compare them.
//!
//! Every length-(2l+1) index runs over m = -l..l in ascending order.

pub(crate) mod io;
mod random;

pub use io::{
    load_distribution, load_signal, save_distribution, save_signal, distribution_from_json, distribution_to_json,
    signal_from_json, signal_to_json, FORMAT_VERSION,
};
pub use random::{density_distribution, random_distribution, random_signal, So3Function};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harmonics::{wigner_table, Rotation};

pub(crate) fn czero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

fn sign(m: i64) -> f64 {
    if m.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Coefficients of a band-limited function on R shells: one (2l+1) x R matrix per band.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    shells: usize,
    bands: Vec<DMatrix<Complex64>>,
}

impl Signal {
    pub fn new(bands: Vec<DMatrix<Complex64>>) -> Result<Self> {
        if bands.is_empty() {
            return Err(Error::InvalidArgument("signal needs at least band 0".into()));
        }
        let shells = bands[0].ncols();
        if shells == 0 {
            return Err(Error::InvalidArgument("signal needs at least one shell".into()));
        }
        for (l, b) in bands.iter().enumerate() {
            if b.nrows() != 2 * l + 1 || b.ncols() != shells {
                return Err(Error::ShapeMismatch(format!(
                    "band {l} is {}x{}, expected {}x{shells}",
                    b.nrows(),
                    b.ncols(),
                    2 * l + 1
                )));
            }
            if b.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::InvalidArgument(format!("band {l} has non-finite entries")));
            }
        }
        Ok(Signal { shells, bands })
    }

    pub fn zeros(l_max: usize, shells: usize) -> Self {
        Signal {
            shells,
            bands: (0..=l_max).map(|l| DMatrix::zeros(2 * l + 1, shells)).collect(),
        }
    }

    pub fn l_max(&self) -> usize {
        self.bands.len() - 1
    }

    pub fn shells(&self) -> usize {
        self.shells
    }

    pub fn band(&self, l: usize) -> &DMatrix<Complex64> {
        &self.bands[l]
    }

    /// Replaces band `l`; the shape must match.
    pub fn set_band(&mut self, l: usize, x: DMatrix<Complex64>) -> Result<()> {
        if x.nrows() != 2 * l + 1 || x.ncols() != self.shells {
            return Err(Error::ShapeMismatch(format!("band {l} replacement is {}x{}", x.nrows(), x.ncols())));
        }
        self.bands[l] = x;
        Ok(())
    }

    pub fn bands(&self) -> &[DMatrix<Complex64>] {
        &self.bands
    }

    pub fn into_bands(self) -> Vec<DMatrix<Complex64>> {
        self.bands
    }

    /// Number of complex coefficients, R (L+1)^2.
    pub fn coefficient_count(&self) -> usize {
        self.shells * (self.l_max() + 1) * (self.l_max() + 1)
    }

    pub fn norm(&self) -> f64 {
        self.bands.iter().map(|b| b.norm_squared()).sum::<f64>().sqrt()
    }

    pub fn truncate(&self, l_max: usize) -> Signal {
        Signal {
            shells: self.shells,
            bands: self.bands[..=l_max.min(self.l_max())].to_vec(),
        }
    }

    pub fn scale(&self, a: f64) -> Signal {
        Signal {
            shells: self.shells,
            bands: self.bands.iter().map(|b| b * Complex64::new(a, 0.0)).collect(),
        }
    }

    /// Largest violation of x_{-m} = (-1)^m conj(x_m).
    pub fn real_symmetry_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (l, b) in self.bands.iter().enumerate() {
            let j = l as i64;
            for m in -j..=j {
                for s in 0..self.shells {
                    let lhs = b[((-m + j) as usize, s)];
                    let rhs = b[((m + j) as usize, s)].conj() * sign(m);
                    worst = worst.max((lhs - rhs).norm());
                }
            }
        }
        worst
    }

    pub fn is_real_symmetric(&self, tol: f64) -> bool {
        self.real_symmetry_defect() <= tol
    }

    /// Orthogonal projection onto real-symmetric coefficient tuples.
    pub fn symmetrize(&self) -> Signal {
        let bands = self
            .bands
            .iter()
            .enumerate()
            .map(|(l, b)| {
                let j = l as i64;
                DMatrix::from_fn(b.nrows(), b.ncols(), |r, s| {
                    let m = r as i64 - j;
                    let mirror = b[((-m + j) as usize, s)].conj() * sign(m);
                    (b[(r, s)] + mirror) * 0.5
                })
            })
            .collect();
        Signal {
            shells: self.shells,
            bands,
        }
    }

    pub fn rotated(&self, g: &Rotation) -> Signal {
        let d = wigner_table(self.l_max()).big_d_all(self.l_max(), g);
        Signal {
            shells: self.shells,
            bands: self.bands.iter().zip(&d).map(|(x, d)| d * x).collect(),
        }
    }

    /// Per-band Gram matrices X_l^H X_l, which do not change under rotation.
    pub fn grams(&self) -> Vec<DMatrix<Complex64>> {
        self.bands.iter().map(|b| b.adjoint() * b).collect()
    }
}

/// Fourier matrices rho_hat(H_l) = E[D^l(g)^H] of a distribution on SO(3), one per band.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    bands: Vec<DMatrix<Complex64>>,
}

impl Distribution {
    /// Band 0 must be the 1x1 matrix [1]; values within 1e-10 are snapped to exactly 1.
    pub fn new(mut bands: Vec<DMatrix<Complex64>>) -> Result<Self> {
        if bands.is_empty() {
            return Err(Error::InvalidArgument("distribution needs at least band 0".into()));
        }
        for (l, b) in bands.iter().enumerate() {
            let w = 2 * l + 1;
            if b.nrows() != w || b.ncols() != w {
                return Err(Error::ShapeMismatch(format!("band {l} is {}x{}, expected {w}x{w}", b.nrows(), b.ncols())));
            }
            if b.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::InvalidArgument(format!("band {l} has non-finite entries")));
            }
        }
        if (bands[0][(0, 0)] - Complex64::new(1.0, 0.0)).norm() > 1e-10 {
            return Err(Error::InvalidArgument(format!(
                "band 0 must equal 1 for a probability distribution, got {}",
                bands[0][(0, 0)]
            )));
        }
        bands[0][(0, 0)] = Complex64::new(1.0, 0.0);
        Ok(Distribution { bands })
    }

    /// Haar measure: every band above 0 vanishes.
    pub fn uniform(l_max: usize) -> Self {
        let mut bands: Vec<DMatrix<Complex64>> = (0..=l_max).map(|l| DMatrix::zeros(2 * l + 1, 2 * l + 1)).collect();
        bands[0][(0, 0)] = Complex64::new(1.0, 0.0);
        Distribution { bands }
    }

    /// Point mass at the identity: every band is the identity matrix.
    pub fn identity(l_max: usize) -> Self {
        Distribution {
            bands: (0..=l_max).map(|l| DMatrix::identity(2 * l + 1, 2 * l + 1)).collect(),
        }
    }

    pub fn l_max(&self) -> usize {
        self.bands.len() - 1
    }

    pub fn band(&self, l: usize) -> &DMatrix<Complex64> {
        &self.bands[l]
    }

    pub fn bands(&self) -> &[DMatrix<Complex64>] {
        &self.bands
    }

    pub fn set_band(&mut self, l: usize, b: DMatrix<Complex64>) -> Result<()> {
        let w = 2 * l + 1;
        if l == 0 || b.nrows() != w || b.ncols() != w {
            return Err(Error::ShapeMismatch(format!("cannot replace band {l} with a {}x{} matrix", b.nrows(), b.ncols())));
        }
        self.bands[l] = b;
        Ok(())
    }

    pub fn truncate(&self, l_max: usize) -> Distribution {
        Distribution {
            bands: self.bands[..=l_max.min(self.l_max())].to_vec(),
        }
    }

    /// Largest column norm outside column m' = 0, over all bands.
    pub fn in_plane_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (l, b) in self.bands.iter().enumerate() {
            for c in 0..b.ncols() {
                if c != l {
                    worst = worst.max(b.column(c).norm());
                }
            }
        }
        worst
    }

    pub fn is_in_plane(&self, tol: f64) -> bool {
        self.in_plane_defect() <= tol
    }

    /// Density value via the inversion formula rho(g) = sum_l (2l+1) tr(rho_hat_l D^l(g)); real for a
    /// genuine density.
    pub fn density_at(&self, g: &Rotation) -> Complex64 {
        let d = wigner_table(self.l_max()).big_d_all(self.l_max(), g);
        self.bands
            .iter()
            .zip(&d)
            .enumerate()
            .map(|(l, (r, d))| (r * d).trace() * (2 * l + 1) as f64)
            .sum()
    }

    /// Law of g h^{-1} when g has this law, i.e. bands D^l(h) rho_hat_l.
    ///
    /// Paired with the signal h x this produces exactly the same observations as (x, rho).
    pub fn transported(&self, h: &Rotation) -> Distribution {
        let d = wigner_table(self.l_max()).big_d_all(self.l_max(), h);
        Distribution {
            bands: self.bands.iter().zip(&d).map(|(r, d)| d * r).collect(),
        }
    }
}

/// Relative errors between a reference signal and an estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryMetrics {
    pub relative_error: f64,
    pub per_band_error: Vec<f64>,
    pub snr: Option<f64>,
}

impl RecoveryMetrics {
    pub fn with_snr(mut self, snr: f64) -> Self {
        self.snr = Some(snr);
        self
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else if num == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

fn band_errors(x: &[DMatrix<Complex64>], y: &[DMatrix<Complex64>]) -> (f64, Vec<f64>) {
    let mut num = 0.0;
    let mut den = 0.0;
    let per = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let d = (a - b).norm_squared();
            let n = a.norm_squared();
            num += d;
            den += n;
            ratio(d.sqrt(), n.sqrt())
        })
        .collect();
    (ratio(num.sqrt(), den.sqrt()), per)
}

/// ||x - xhat||_F / ||x||_F over all coefficients, with a per-band breakdown.
pub fn relative_error(x: &Signal, xhat: &Signal) -> Result<RecoveryMetrics> {
    if x.l_max() != xhat.l_max() || x.shells() != xhat.shells() {
        return Err(Error::InvalidArgument(format!(
            "cannot compare signals of shape (L={}, R={}) and (L={}, R={})",
            x.l_max(),
            x.shells(),
            xhat.l_max(),
            xhat.shells()
        )));
    }
    let (relative_error, per_band_error) = band_errors(x.bands(), xhat.bands());
    Ok(RecoveryMetrics {
        relative_error,
        per_band_error,
        snr: None,
    })
}

/// Relative Frobenius error over bands 1..=L (band 0 is fixed at 1 for both).
pub fn distribution_error(rho: &Distribution, rhohat: &Distribution) -> Result<RecoveryMetrics> {
    if rho.l_max() != rhohat.l_max() {
        return Err(Error::InvalidArgument(format!(
            "cannot compare distributions with L={} and L={}",
            rho.l_max(),
            rhohat.l_max()
        )));
    }
    let (relative_error, mut per) = band_errors(&rho.bands()[1..], &rhohat.bands()[1..]);
    per.insert(0, 0.0);
    Ok(RecoveryMetrics {
        relative_error,
        per_band_error: per,
        snr: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_validation() {
        assert!(Signal::new(vec![DMatrix::zeros(1, 2), DMatrix::zeros(3, 1)]).is_err());
        assert!(Signal::new(vec![DMatrix::zeros(1, 2), DMatrix::zeros(2, 2)]).is_err());
        assert!(Signal::new(vec![DMatrix::zeros(1, 2), DMatrix::zeros(3, 2)]).is_ok());
        assert!(Distribution::new(vec![DMatrix::from_element(1, 1, Complex64::new(0.5, 0.0))]).is_err());
    }

    #[test]
    fn error_against_itself_and_double() {
        let x = random_signal(3, 2, 4, false).unwrap();
        let m = relative_error(&x, &x).unwrap();
        assert_eq!(m.relative_error, 0.0);
        let m2 = relative_error(&x, &x.scale(2.0)).unwrap();
        assert!((m2.relative_error - 1.0).abs() < 1e-14);
        assert!(m2.per_band_error.iter().all(|e| (e - 1.0).abs() < 1e-14));
        assert!(relative_error(&x, &x.truncate(2)).is_err());
    }

    #[test]
    fn error_with_prescribed_perturbation() {
        let x = random_signal(4, 3, 11, false).unwrap();
        let e = random_signal(4, 3, 12, false).unwrap();
        let e = e.scale(0.1 * x.norm() / e.norm());
        let y = Signal::new(x.bands().iter().zip(e.bands()).map(|(a, b)| a + b).collect()).unwrap();
        let m = relative_error(&x, &y).unwrap();
        assert!((m.relative_error - 0.1).abs() < 1e-12);
    }

    #[test]
    fn symmetrize_is_idempotent_projection() {
        let x = random_signal(4, 2, 5, false).unwrap();
        let s = x.symmetrize();
        assert!(s.is_real_symmetric(1e-14));
        let s2 = s.symmetrize();
        assert!(relative_error(&s, &s2).unwrap().relative_error < 1e-15);
    }

    #[test]
    fn uniform_density_is_one() {
        let u = Distribution::uniform(4);
        assert!((u.density_at(&Rotation::new(0.3, 1.0, 2.0)) - 1.0).norm() < 1e-15);
    }
}
