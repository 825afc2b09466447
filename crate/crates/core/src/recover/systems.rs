//! The two linear systems solved at each band of the march.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::lstsq::{lstsq, LstsqSolution, SystemTag};
use super::{RecoveryOptions, SignalRowSet};
use crate::error::{Error, Result, SystemKind};
use crate::harmonics::cg_table;
use crate::model::{Distribution, Signal};
use crate::moments::{column, FirstMoment, SecondMoment};

/// One equation of the distribution system: the component (l; l2 s2, l3 s3).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RhoRow {
    pub l2: usize,
    pub l3: usize,
    pub s2: usize,
    pub s3: usize,
}

/// Where the unknown band sits in a signal-system equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    /// (l1; l s, l' s')
    Second,
    /// (l1; l' s', l s)
    Third,
}

/// One equation of the signal system: entry s1 of (l1; ., .) pairing the unknown band with band lp
/// on shell sp.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SignalRow {
    pub l1: usize,
    pub lp: usize,
    pub s1: usize,
    pub sp: usize,
    pub slot: Slot,
}

#[derive(Debug, Clone)]
pub struct Assembled<R> {
    pub a: DMatrix<Complex64>,
    pub rows: Vec<R>,
}

/// Largest signal band allowed in the distribution system at band `ell`.
fn rho_band_cap(ell: usize) -> usize {
    if ell == 1 {
        1
    } else {
        ell - 1
    }
}

fn need_signal(known: &Signal, band: usize) -> Result<()> {
    if known.l_max() < band {
        return Err(Error::InvalidArgument(format!(
            "known signal stops at band {} but band {band} is required",
            known.l_max()
        )));
    }
    Ok(())
}

/// Rows (l2, l3, s2, s3) with l2, l3 <= cap and |l2 - l3| <= ell <= l2 + l3; entry (row, m1) is
/// cg_project(x^{l2}[s2], x^{l3}[s3], ell)[m1]. The matrix does not depend on the column s1 of
/// rho_hat being solved for.
pub fn assemble_a_rho(ell: usize, known: &Signal) -> Result<Assembled<RhoRow>> {
    if ell == 0 {
        return Err(Error::InvalidArgument("band 0 of the distribution is fixed".into()));
    }
    let cap = rho_band_cap(ell);
    need_signal(known, cap)?;
    let r = known.shells();
    let cg = cg_table(ell.max(cap));
    let mut rows = Vec::new();
    for l2 in 0..=cap {
        for l3 in 0..=cap {
            if ell < l2.abs_diff(l3) || ell > l2 + l3 {
                continue;
            }
            for s2 in 0..r {
                for s3 in 0..r {
                    rows.push(RhoRow { l2, l3, s2, s3 });
                }
            }
        }
    }
    let w = 2 * ell + 1;
    let mut a = DMatrix::zeros(rows.len(), w);
    let mut c = vec![Complex64::new(0.0, 0.0); w];
    for (i, row) in rows.iter().enumerate() {
        cg.project_into(column(known.band(row.l2), row.s2), column(known.band(row.l3), row.s3), ell, &mut c);
        for m in 0..w {
            a[(i, m)] = c[m];
        }
    }
    Ok(Assembled { a, rows })
}

/// Outcome of one band's solve.
#[derive(Debug, Clone)]
pub struct BandSolution {
    pub band: DMatrix<Complex64>,
    pub rows: usize,
    pub cols: usize,
    pub cond: f64,
    pub residual: f64,
}

impl BandSolution {
    fn from(sol: LstsqSolution, band: DMatrix<Complex64>, rows: usize, cols: usize) -> Self {
        BandSolution {
            band,
            rows,
            cols,
            cond: sol.cond,
            residual: sol.residual,
        }
    }
}

/// Solves A conj(rho_hat_ell[:, s1]) = (l; l2 s2, l3 s3)[s1] for every column s1 (only s1 = 0 in
/// in-plane mode; the other columns are set to zero).
pub fn solve_distribution_band(
    ell: usize,
    m1: Option<&FirstMoment>,
    m2: &SecondMoment,
    known: &Signal,
    opts: &RecoveryOptions,
) -> Result<BandSolution> {
    let sys = assemble_a_rho(ell, known)?;
    let w = 2 * ell + 1;
    let cols: Vec<usize> = if opts.in_plane { vec![ell] } else { (0..w).collect() };
    let mut a = sys.a;
    let mut b = DMatrix::zeros(sys.rows.len(), cols.len());
    for (i, row) in sys.rows.iter().enumerate() {
        for (j, &s1) in cols.iter().enumerate() {
            b[(i, j)] = m2.entry(ell, row.l2, row.l3, s1 as i64 - ell as i64, row.s2, row.s3);
        }
    }
    // M1_ell = rho_hat^H X_ell gives X_ell^T conj(rho_hat) = M1_ell^T once X_ell is known.
    if let Some(m1) = m1.filter(|_| opts.append_first_moment_rows && known.l_max() >= ell) {
        let x = known.band(ell).transpose();
        let rhs = m1.band(ell).transpose();
        let (n0, r) = (a.nrows(), x.nrows());
        a = a.resize_vertically(n0 + r, Complex64::new(0.0, 0.0));
        a.rows_mut(n0, r).copy_from(&x);
        b = b.resize_vertically(n0 + r, Complex64::new(0.0, 0.0));
        for (j, &s1) in cols.iter().enumerate() {
            for s in 0..r {
                b[(n0 + s, j)] = rhs[(s, s1)];
            }
        }
    }
    let tag = SystemTag {
        band: ell,
        system: SystemKind::Distribution,
    };
    let sol = lstsq(&a, &b, tag)?;
    let mut band = DMatrix::zeros(w, w);
    for (j, &s1) in cols.iter().enumerate() {
        for k in 0..w {
            band[(k, s1)] = sol.x[(k, j)].conj();
        }
    }
    let rows = a.nrows();
    Ok(BandSolution::from(sol, band, rows, w))
}

fn signal_rows(ell: usize, l_max: usize, shells: usize, opts: &RecoveryOptions) -> Vec<SignalRow> {
    let mut rows = Vec::new();
    match opts.effective_rows() {
        SignalRowSet::Proof => {
            for i in 1..ell {
                for sp in 0..shells {
                    rows.push(SignalRow {
                        l1: i,
                        lp: ell - i,
                        s1: i,
                        sp,
                        slot: Slot::Third,
                    });
                }
            }
            // The l1 = 1 rows above only reach a 3-dimensional span (they are linear in x^1[s']),
            // so band 2 also needs the l1 = 2 rows, one per shell.
            if ell == 2 && opts.include_l1_equal_l {
                for sp in 0..shells {
                    rows.push(SignalRow {
                        l1: 2,
                        lp: 1,
                        s1: 2,
                        sp,
                        slot: Slot::Third,
                    });
                }
            }
        }
        _ => {
            let top = if opts.include_l1_equal_l { ell } else { ell - 1 };
            for l1 in 1..=top.min(l_max) {
                for lp in 0..ell {
                    if l1 < ell - lp || l1 > ell + lp {
                        continue;
                    }
                    let s1s: Vec<usize> = if opts.in_plane { vec![l1] } else { (0..2 * l1 + 1).collect() };
                    for &s1 in &s1s {
                        for sp in 0..shells {
                            for slot in [Slot::Second, Slot::Third] {
                                rows.push(SignalRow { l1, lp, s1, sp, slot });
                            }
                        }
                    }
                }
            }
        }
    }
    rows
}

/// Coefficient matrix for X_ell; rows are [`SignalRow`]s and columns m in -ell..ell.
///
/// The entries do not involve the shell `s` of the unknown band, so one matrix serves all shells;
/// `s` is only range checked.
pub fn assemble_a_x(
    ell: usize,
    s: usize,
    rho: &Distribution,
    known: &Signal,
    opts: &RecoveryOptions,
) -> Result<Assembled<SignalRow>> {
    if ell < 2 {
        return Err(Error::InvalidArgument("signal systems start at band 2".into()));
    }
    need_signal(known, ell - 1)?;
    let r = known.shells();
    if s >= r {
        return Err(Error::InvalidArgument(format!("shell {s} out of range for R = {r}")));
    }
    let top = if opts.include_l1_equal_l { ell } else { ell - 1 };
    if rho.l_max() < top {
        return Err(Error::InvalidArgument(format!(
            "known distribution stops at band {} but band {top} is required",
            rho.l_max()
        )));
    }
    let rows = signal_rows(ell, rho.l_max().max(ell), r, opts);
    let cg = cg_table(ell);
    let (j, w) = (ell as i64, 2 * ell + 1);
    let mut a = DMatrix::zeros(rows.len(), w);
    for (i, row) in rows.iter().enumerate() {
        let (j1, jp) = (row.l1 as i64, row.lp as i64);
        let rh = rho.band(row.l1);
        let xp = column(known.band(row.lp), row.sp);
        for k2 in -j..=j {
            let mut acc = Complex64::new(0.0, 0.0);
            for k3 in -jp..=jp {
                let m = k2 + k3;
                if m.abs() > j1 {
                    continue;
                }
                let c = match row.slot {
                    Slot::Second => cg.get(j, k2, jp, k3, j1, m),
                    Slot::Third => cg.get(jp, k3, j, k2, j1, m),
                };
                if c != 0.0 {
                    acc += rh[((m + j1) as usize, row.s1)].conj() * xp[(k3 + jp) as usize] * c;
                }
            }
            a[(i, (k2 + j) as usize)] = acc;
        }
    }
    Ok(Assembled { a, rows })
}

/// Solves for all R shells of X_ell against one coefficient matrix.
pub fn solve_signal_band(
    ell: usize,
    m1: Option<&FirstMoment>,
    m2: &SecondMoment,
    rho: &Distribution,
    known: &Signal,
    opts: &RecoveryOptions,
) -> Result<BandSolution> {
    let sys = assemble_a_x(ell, 0, rho, known, opts)?;
    let r = known.shells();
    let mut a = sys.a;
    let mut b = DMatrix::zeros(sys.rows.len(), r);
    for (i, row) in sys.rows.iter().enumerate() {
        let m = row.s1 as i64 - row.l1 as i64;
        for s in 0..r {
            b[(i, s)] = match row.slot {
                Slot::Second => m2.entry(row.l1, ell, row.lp, m, s, row.sp),
                Slot::Third => m2.entry(row.l1, row.lp, ell, m, row.sp, s),
            };
        }
    }
    // M1_ell = rho_hat_ell^H X_ell.
    if let Some(m1) = m1.filter(|_| opts.append_first_moment_rows) {
        let w = 2 * ell + 1;
        let n0 = a.nrows();
        a = a.resize_vertically(n0 + w, Complex64::new(0.0, 0.0));
        a.rows_mut(n0, w).copy_from(&rho.band(ell).adjoint());
        b = b.resize_vertically(n0 + w, Complex64::new(0.0, 0.0));
        b.rows_mut(n0, w).copy_from(m1.band(ell));
    }
    let tag = SystemTag {
        band: ell,
        system: SystemKind::Signal,
    };
    let sol = lstsq(&a, &b, tag)?;
    let band = sol.x.clone();
    let rows = a.nrows();
    Ok(BandSolution::from(sol, band, rows, 2 * ell + 1))
}
