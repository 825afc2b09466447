//! Bands 0 and 1: the starting point of the march.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use super::lstsq::{lstsq, SystemTag};
use super::{BaseMode, GroundTruth, RecoveryOptions};
use crate::error::{Error, Result, SystemKind};
use crate::model::{Distribution, Signal};
use crate::moments::{population_second_moment, FirstMoment, SecondMoment};

#[derive(Debug, Clone)]
pub struct BaseCase {
    pub x0: DMatrix<Complex64>,
    pub x1: DMatrix<Complex64>,
    pub rho1: DMatrix<Complex64>,
    /// Condition number and residual of the band-1 first-moment solve.
    pub cond: f64,
    pub residual: f64,
    /// Gram eigenvalues in decreasing order (blind mode only).
    pub gram_eigenvalues: Vec<f64>,
    /// (1; 1, 1) residuals of the kept and the rejected sign (blind mode only).
    pub reflection: Option<(f64, f64)>,
}

/// R x R Gram sum_m x_m[s] conj(x_m[s']) of a real-symmetric band-1 signal, read off the uniform
/// component (0; 1, 1)[0] = -(1/sqrt 3) X_1^T conj(X_1).
pub fn gram_from_moment(m2: &SecondMoment) -> DMatrix<f64> {
    let r = m2.shells();
    let f = -(3f64).sqrt();
    let g = DMatrix::from_fn(r, r, |s, t| (m2.entry(0, 1, 1, 0, s, t) * f).re);
    (&g + g.transpose()) * 0.5
}

/// Complex band-1 coefficients of a real function from its real (x, y, z)-type components
/// r_{-1}, r_0, r_1: x_0 = r_0, x_1 = (r_1 + i r_{-1}) / sqrt 2, x_{-1} = -(r_1 - i r_{-1}) / sqrt 2.
pub fn real_to_complex_band1(rr: &DMatrix<f64>) -> DMatrix<Complex64> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    DMatrix::from_fn(3, rr.ncols(), |m, s| {
        let (rm, r0, rp) = (rr[(0, s)], rr[(1, s)], rr[(2, s)]);
        match m {
            0 => Complex64::new(-rp * h, rm * h),
            1 => Complex64::new(r0, 0.0),
            _ => Complex64::new(rp * h, rm * h),
        }
    })
}

/// Solves M1_1 = rho_hat_1^H X_1 for rho_hat_1, i.e. X_1^H rho_hat_1 = M1_1^H.
fn rho1_from_first_moment(
    x1: &DMatrix<Complex64>,
    m1: &FirstMoment,
    in_plane: bool,
) -> Result<(DMatrix<Complex64>, f64, f64)> {
    let a = x1.adjoint();
    let b_full = m1.band(1).adjoint();
    let tag = SystemTag {
        band: 1,
        system: SystemKind::Distribution,
    };
    if in_plane {
        let b = b_full.columns(1, 1).into_owned();
        let sol = lstsq(&a, &b, tag)?;
        let mut rho = DMatrix::zeros(3, 3);
        rho.set_column(1, &sol.x.column(0));
        Ok((rho, sol.cond, sol.residual))
    } else {
        let sol = lstsq(&a, &b_full, tag)?;
        Ok((sol.x, sol.cond, sol.residual))
    }
}

fn predicted_111(x0: &DMatrix<Complex64>, x1: &DMatrix<Complex64>, rho1: &DMatrix<Complex64>) -> Vec<Complex64> {
    let x = Signal::new(vec![x0.clone(), x1.clone()]).expect("band shapes");
    let rho = Distribution::new(vec![DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0)), rho1.clone()])
        .expect("band 0 is one");
    population_second_moment(&rho, &x)
        .expect("matching bands")
        .component(1, 1, 1)
        .expect("admissible")
        .to_vec()
}

fn distance(a: &[Complex64], b: &[Complex64], sign: f64) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p * sign - q).norm_sqr()).sum::<f64>().sqrt()
}

pub fn recover_base_case(
    m1: &FirstMoment,
    m2: &SecondMoment,
    opts: &RecoveryOptions,
    truth: Option<&GroundTruth>,
) -> Result<BaseCase> {
    if m1.l_max() < 1 || m2.l_max() < 1 {
        return Err(Error::InvalidArgument("recovery needs moments through band 1".into()));
    }
    if m1.shells() != m2.shells() || m1.l_max() != m2.l_max() {
        return Err(Error::ShapeMismatch("first and second moments disagree in shape".into()));
    }
    let r = m2.shells();
    match opts.mode {
        BaseMode::Oracle => {
            let t = truth.ok_or_else(|| Error::InvalidArgument("oracle base needs the ground truth".into()))?;
            if t.signal.l_max() < 1 || t.signal.shells() != r {
                return Err(Error::ShapeMismatch("ground-truth signal does not match the moments".into()));
            }
            let x0 = t.signal.band(0).clone();
            let x1 = t.signal.band(1).clone();
            let (rho1, cond, residual) = rho1_from_first_moment(&x1, m1, opts.in_plane)?;
            Ok(BaseCase {
                x0,
                x1,
                rho1,
                cond,
                residual,
                gram_eigenvalues: Vec::new(),
                reflection: None,
            })
        }
        BaseMode::Blind => {
            if r < 3 {
                return Err(Error::DegenerateSignal(format!(
                    "blind base needs X_1 of rank three, impossible with R = {r}"
                )));
            }
            let g = gram_from_moment(m2);
            let eig = SymmetricEigen::new(g);
            let mut order: Vec<usize> = (0..r).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
            let lam: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
            let tol = opts.rank_tolerance * lam[0];
            if lam[0] <= 0.0 || lam[2] <= tol {
                return Err(Error::DegenerateSignal(format!(
                    "Gram of X_1 has rank below three (eigenvalues {:.3e}, {:.3e}, {:.3e})",
                    lam[0], lam[1], lam[2]
                )));
            }
            if r > 3 && lam[3] > tol {
                return Err(Error::DegenerateSignal(format!(
                    "Gram of X_1 is not rank three: fourth eigenvalue {:.3e} exceeds {:.3e}",
                    lam[3], tol
                )));
            }
            let rr = DMatrix::from_fn(3, r, |i, s| lam[i].sqrt() * eig.eigenvectors[(s, order[i])]);
            let x1 = real_to_complex_band1(&rr);
            let x0 = m1.band(0).clone();
            let (rho1, cond, residual) = rho1_from_first_moment(&x1, m1, opts.in_plane)?;
            let pred = predicted_111(&x0, &x1, &rho1);
            let target = m2.component(1, 1, 1).expect("admissible");
            let plus = distance(&pred, target, 1.0);
            let minus = distance(&pred, target, -1.0);
            if (plus - minus).abs() < 1e-3 * plus.max(minus) || plus.max(minus) == 0.0 {
                return Err(Error::AmbiguousReflection { plus, minus });
            }
            let (x1, rho1, kept) = if plus <= minus {
                (x1, rho1, (plus, minus))
            } else {
                (-x1, -rho1, (minus, plus))
            };
            Ok(BaseCase {
                x0,
                x1,
                rho1,
                cond,
                residual,
                gram_eigenvalues: lam,
                reflection: Some(kept),
            })
        }
    }
}
