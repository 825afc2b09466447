use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{DeficitReason, Error, Result, SystemKind};

#[derive(Debug, Clone)]
pub struct LstsqSolution {
    pub x: DMatrix<Complex64>,
    /// sigma_max / sigma_min of the coefficient matrix; infinite when it is rank deficient.
    pub cond: f64,
    /// ||A x - b||_F / ||b||_F, and 0 when b = 0.
    pub residual: f64,
    pub singular_values: Vec<f64>,
}

/// Where a system came from, for error messages.
#[derive(Debug, Clone, Copy)]
pub struct SystemTag {
    pub band: usize,
    pub system: SystemKind,
}

/// Least squares through a thin SVD of `a`; the normal equations are never formed.
///
/// The SVD is faer's: nalgebra's complex (and real) SVD loses about seven digits on some
/// well-conditioned tall systems met here.
pub fn lstsq(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>, tag: SystemTag) -> Result<LstsqSolution> {
    let (rows, cols) = a.shape();
    if b.nrows() != rows {
        return Err(Error::ShapeMismatch(format!("{} rows in A but {} in b", rows, b.nrows())));
    }
    let deficit = |reason| Error::Underdetermined {
        band: tag.band,
        system: tag.system,
        rows,
        cols,
        reason,
    };
    if rows < cols {
        return Err(deficit(DeficitReason::Structural));
    }
    if a.iter().all(|z| *z == Complex64::new(0.0, 0.0)) {
        return Err(deficit(DeficitReason::ZeroMatrix));
    }
    let fa = faer::Mat::<Complex64>::from_fn(rows, cols, |i, j| a[(i, j)]);
    let svd = fa.thin_svd().map_err(|e| Error::NoConvergence(format!("SVD of the {} system at band {}: {e:?}", tag.system, tag.band)))?;
    let (u, v) = (svd.U(), svd.V());
    let sv: Vec<f64> = svd.S().column_vector().iter().map(|z| z.re).collect();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let eps = smax * f64::EPSILON * rows.max(cols) as f64;
    // x = V diag(1/s) U^H b over the singular values above eps
    let mut coef = DMatrix::<Complex64>::zeros(cols, b.ncols());
    for k in 0..cols {
        if sv[k] <= eps {
            continue;
        }
        for c in 0..b.ncols() {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..rows {
                acc += u[(i, k)].conj() * b[(i, c)];
            }
            coef[(k, c)] = acc / sv[k];
        }
    }
    let vn = DMatrix::from_fn(cols, cols, |i, j| v[(i, j)]);
    let x = vn * coef;
    let bn = b.norm();
    let residual = if bn == 0.0 { 0.0 } else { (a * &x - b).norm() / bn };
    Ok(LstsqSolution {
        x,
        cond,
        residual,
        singular_values: sv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TAG: SystemTag = SystemTag {
        band: 3,
        system: SystemKind::Signal,
    };

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn solves_consistent_overdetermined_system() {
        let a = DMatrix::from_row_slice(3, 2, &[c(1.0, 0.0), c(0.0, 1.0), c(2.0, -1.0), c(0.5, 0.0), c(0.0, 0.0), c(1.0, 1.0)]);
        let x = DMatrix::from_column_slice(2, 1, &[c(0.3, -0.2), c(-1.0, 0.7)]);
        let s = lstsq(&a, &(&a * &x), TAG).unwrap();
        assert!((s.x - x).norm() < 1e-14);
        assert!(s.residual < 1e-14 && s.cond >= 1.0);
    }

    #[test]
    fn diagonal_condition_number() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(4.0, 0.0), c(0.0, 0.5)]));
        let s = lstsq(&a, &DMatrix::zeros(2, 1), TAG).unwrap();
        assert!((s.cond - 8.0).abs() < 1e-12);
        assert_eq!(s.residual, 0.0);
        assert_eq!(s.x.norm(), 0.0);
    }

    #[test]
    fn deficits_are_classified() {
        let wide = DMatrix::from_element(2, 3, c(1.0, 0.0));
        match lstsq(&wide, &DMatrix::zeros(2, 1), TAG) {
            Err(Error::Underdetermined { reason: DeficitReason::Structural, band: 3, .. }) => {}
            other => panic!("{other:?}"),
        }
        match lstsq(&DMatrix::zeros(4, 2), &DMatrix::zeros(4, 1), TAG) {
            Err(Error::Underdetermined { reason: DeficitReason::ZeroMatrix, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rank_deficient_is_infinite_cond() {
        let a = DMatrix::from_row_slice(3, 2, &[c(1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(4.0, 0.0), c(3.0, 0.0), c(6.0, 0.0)]);
        let s = lstsq(&a, &DMatrix::from_element(3, 1, c(1.0, 0.0)), TAG).unwrap();
        assert!(s.cond > 1e14);
    }
}
