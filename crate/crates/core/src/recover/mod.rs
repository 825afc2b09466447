//! Frequency marching: bands 0 and 1 from the base case, then for each band a linear solve for the
//! distribution followed by a linear solve for the signal.

mod base;
mod lstsq;
mod report;
mod systems;

pub use base::{gram_from_moment, real_to_complex_band1, recover_base_case, BaseCase};
pub use lstsq::{lstsq, LstsqSolution, SystemTag};
pub use report::{RecoveryReport, StageReport, StageStatus, REPORT_COLUMNS};
pub use systems::{
    assemble_a_rho, assemble_a_x, solve_distribution_band, solve_signal_band, Assembled, BandSolution, RhoRow,
    SignalRow, Slot,
};

use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{DeficitReason, Error, Result, SystemKind};
use crate::model::{Distribution, Signal};
use crate::moments::{FirstMoment, SecondMoment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaseMode {
    /// Bands 0 and 1 from the moments alone (requires a real-symmetric signal and R >= 3).
    #[default]
    Blind,
    /// X_0 and X_1 copied from the ground truth; rho_hat_1 still solved from the first moment.
    Oracle,
}

/// Which equations enter the signal systems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignalRowSet {
    /// `Proof` in in-plane mode, `Full` otherwise.
    #[default]
    Auto,
    /// Every admissible (l1, l', s1, s') in both slots.
    Full,
    /// The in-plane counting set: l1 = i, l' = l - i for 1 <= i < l, column m' = 0, every s', one
    /// slot; at l = 2 also the l1 = 2, l' = 1 equations for every s'.
    Proof,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecoveryOptions {
    pub mode: BaseMode,
    pub in_plane: bool,
    /// Relative residual above which a stage is reported as inconsistent.
    pub solver_tolerance: f64,
    /// Gram eigenvalues below this fraction of the largest count as zero.
    pub rank_tolerance: f64,
    pub include_l1_equal_l: bool,
    pub signal_rows: SignalRowSet,
    /// Also impose the band's first-moment equations where the other factor is known.
    pub append_first_moment_rows: bool,
    /// Condition number above which a stage is flagged unstable.
    pub max_condition: f64,
}

impl Default for RecoveryOptions {
    fn default() -> Self {
        RecoveryOptions {
            mode: BaseMode::Blind,
            in_plane: false,
            solver_tolerance: 1e-10,
            rank_tolerance: 1e-8,
            include_l1_equal_l: true,
            signal_rows: SignalRowSet::Auto,
            append_first_moment_rows: false,
            max_condition: 1e8,
        }
    }
}

impl RecoveryOptions {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("solver_tolerance", self.solver_tolerance),
            ("rank_tolerance", self.rank_tolerance),
            ("max_condition", self.max_condition),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn effective_rows(&self) -> SignalRowSet {
        match self.signal_rows {
            SignalRowSet::Auto if self.in_plane => SignalRowSet::Proof,
            SignalRowSet::Auto => SignalRowSet::Full,
            other => other,
        }
    }
}

/// The generating pair, for oracle-base mode and for error reporting. Without a distribution only
/// signal errors are reported.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub signal: Signal,
    pub distribution: Option<Distribution>,
}

#[derive(Debug, Clone)]
pub struct Recovery {
    pub signal: Signal,
    pub distribution: Distribution,
    pub report: RecoveryReport,
}

fn rel(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a / b
    } else {
        a
    }
}

/// Per-band error against the truth: direct in oracle mode, through the rotation-invariant
/// Gram B^H B in blind mode (the blind frame differs from the truth by a global rotation).
fn band_error(mode: BaseMode, est: &DMatrix<Complex64>, truth: &DMatrix<Complex64>) -> f64 {
    match mode {
        BaseMode::Oracle => rel((est - truth).norm(), truth.norm()),
        BaseMode::Blind => {
            let g = truth.adjoint() * truth;
            rel((est.adjoint() * est - &g).norm(), g.norm())
        }
    }
}

fn classify(cond: f64, residual: f64, opts: &RecoveryOptions) -> StageStatus {
    if !cond.is_finite() || cond > opts.max_condition {
        StageStatus::Unstable
    } else if residual > opts.solver_tolerance {
        StageStatus::Inconsistent
    } else {
        StageStatus::Ok
    }
}

/// Runs the whole march on the given moments.
///
/// Structural row deficits abort with [`Error::Underdetermined`]; stages whose matrix vanishes or
/// is badly conditioned are flagged in the report and the march continues.
pub fn frequency_march(
    m1: &FirstMoment,
    m2: &SecondMoment,
    opts: &RecoveryOptions,
    truth: Option<&GroundTruth>,
) -> Result<Recovery> {
    opts.validate()?;
    let l_max = m2.l_max();
    let r = m2.shells();
    if let Some(t) = truth {
        if t.signal.l_max() < l_max || t.signal.shells() != r || t.distribution.as_ref().is_some_and(|d| d.l_max() < l_max) {
            return Err(Error::ShapeMismatch("ground truth does not cover the moments' bands".into()));
        }
    }
    let start = Instant::now();
    let mut report = RecoveryReport::default();
    let t0 = Instant::now();
    let base = recover_base_case(m1, m2, opts, truth)?;
    report.base_seconds = t0.elapsed().as_secs_f64();
    report.base_cond = base.cond;
    report.base_residual = base.residual;
    report.gram_eigenvalues = base.gram_eigenvalues.clone();
    report.reflection = base.reflection;

    let mut xb = vec![base.x0.clone(), base.x1.clone()];
    let mut rb = vec![DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0))];
    let truth_err = |sys: SystemKind, l: usize, est: &DMatrix<Complex64>| {
        truth.and_then(|t| match sys {
            SystemKind::Signal => Some(band_error(opts.mode, est, t.signal.band(l))),
            SystemKind::Distribution => t.distribution.as_ref().map(|d| band_error(opts.mode, est, d.band(l))),
        })
    };

    for ell in 1..=l_max {
        let t = Instant::now();
        let known = Signal::new(xb[..=ell.max(2) - 1].to_vec())?;
        let stage = solve_distribution_band(ell, Some(m1), m2, &known, opts);
        let (band, mut st) = stage_outcome(stage, ell, SystemKind::Distribution, (2 * ell + 1, 2 * ell + 1), opts)?;
        st.error = truth_err(SystemKind::Distribution, ell, &band);
        st.seconds = t.elapsed().as_secs_f64();
        report.stages.push(st);
        rb.push(band);

        if ell >= 2 {
            let t = Instant::now();
            let rho = Distribution::new(rb.clone())?;
            let known = Signal::new(xb.clone())?;
            let stage = solve_signal_band(ell, Some(m1), m2, &rho, &known, opts);
            let (band, mut st) = stage_outcome(stage, ell, SystemKind::Signal, (2 * ell + 1, r), opts)?;
            st.error = truth_err(SystemKind::Signal, ell, &band);
            st.seconds = t.elapsed().as_secs_f64();
            report.stages.push(st);
            xb.push(band);
        }
    }
    xb.truncate(l_max + 1);
    let signal = Signal::new(xb)?;
    let distribution = Distribution::new(rb)?;
    if let Some(t) = truth {
        report.signal_error = Some(match opts.mode {
            BaseMode::Oracle => crate::model::relative_error(&t.signal.truncate(l_max), &signal)?.relative_error,
            BaseMode::Blind => gram_error(t.signal.truncate(l_max).bands(), signal.bands()),
        });
        if let Some(d) = &t.distribution {
            report.distribution_error = Some(match opts.mode {
                BaseMode::Oracle => crate::model::distribution_error(&d.truncate(l_max), &distribution)?.relative_error,
                BaseMode::Blind => gram_error(&d.bands()[1..=l_max], &distribution.bands()[1..]),
            });
        }
    }
    report.total_seconds = start.elapsed().as_secs_f64();
    Ok(Recovery {
        signal,
        distribution,
        report,
    })
}

/// Relative Frobenius error of the per-band Grams B^H B, stacked over bands.
pub fn gram_error(truth: &[DMatrix<Complex64>], est: &[DMatrix<Complex64>]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (t, e) in truth.iter().zip(est) {
        let g = t.adjoint() * t;
        num += (e.adjoint() * e - &g).norm_squared();
        den += g.norm_squared();
    }
    rel(num.sqrt(), den.sqrt())
}

fn stage_outcome(
    stage: Result<BandSolution>,
    ell: usize,
    system: SystemKind,
    shape: (usize, usize),
    opts: &RecoveryOptions,
) -> Result<(DMatrix<Complex64>, StageReport)> {
    let mut st = StageReport {
        band: ell,
        system,
        rows: 0,
        cols: 2 * ell + 1,
        cond: f64::INFINITY,
        residual: 0.0,
        error: None,
        status: StageStatus::ZeroMatrix,
        seconds: 0.0,
    };
    match stage {
        Ok(sol) => {
            st.rows = sol.rows;
            st.cols = sol.cols;
            st.cond = sol.cond;
            st.residual = sol.residual;
            st.status = classify(sol.cond, sol.residual, opts);
            Ok((sol.band, st))
        }
        Err(Error::Underdetermined {
            rows,
            reason: DeficitReason::ZeroMatrix,
            ..
        }) => {
            st.rows = rows;
            Ok((DMatrix::zeros(shape.0, shape.1), st))
        }
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{random_distribution, random_signal};
    use crate::moments::{population_first_moment, population_second_moment};

    fn run(l: usize, r: usize, seed: u64, in_plane: bool, mode: BaseMode, real: bool) -> Result<Recovery> {
        let x = random_signal(l, r, seed, real).unwrap();
        let rho = random_distribution(l, seed + 1000, in_plane);
        let m1 = population_first_moment(&rho, &x).unwrap();
        let m2 = population_second_moment(&rho, &x).unwrap();
        let opts = RecoveryOptions {
            mode,
            in_plane,
            ..RecoveryOptions::default()
        };
        let truth = GroundTruth {
            signal: x,
            distribution: Some(rho),
        };
        frequency_march(&m1, &m2, &opts, Some(&truth))
    }

    #[test]
    fn oracle_exact_recovery() {
        let rec = run(6, 3, 1, false, BaseMode::Oracle, false).unwrap();
        assert!(rec.report.signal_error.unwrap() < 1e-8, "{:?}", rec.report);
        assert!(rec.report.distribution_error.unwrap() < 1e-8);
        assert_eq!(rec.report.stages.len(), 6 + 5);
        assert!(rec.report.stages.iter().all(|s| s.status == StageStatus::Ok));
    }

    #[test]
    fn in_plane_exact_recovery() {
        let rec = run(5, 4, 2, true, BaseMode::Oracle, false).unwrap();
        assert!(rec.report.signal_error.unwrap() < 1e-8, "{}", rec.report.to_csv());
        assert!(rec.report.distribution_error.unwrap() < 1e-8);
    }

    #[test]
    fn in_plane_three_shells_underdetermined_at_band_three() {
        match run(4, 3, 3, true, BaseMode::Oracle, false) {
            Err(Error::Underdetermined {
                band: 3,
                system: SystemKind::Signal,
                rows: 6,
                cols: 7,
                reason: DeficitReason::Structural,
            }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn blind_recovery_matches_grams() {
        let rec = run(5, 4, 4, false, BaseMode::Blind, true).unwrap();
        assert!(rec.report.signal_error.unwrap() < 1e-8, "{}", rec.report.to_csv());
        assert!(rec.report.distribution_error.unwrap() < 1e-8);
    }

    #[test]
    fn uniform_distribution_completes_flagged() {
        let x = random_signal(3, 3, 5, false).unwrap();
        let rho = Distribution::uniform(3);
        let m1 = population_first_moment(&rho, &x).unwrap();
        let m2 = population_second_moment(&rho, &x).unwrap();
        let opts = RecoveryOptions {
            mode: BaseMode::Oracle,
            ..RecoveryOptions::default()
        };
        let truth = GroundTruth {
            signal: x,
            distribution: Some(rho),
        };
        let rec = frequency_march(&m1, &m2, &opts, Some(&truth)).unwrap();
        assert!(rec.report.failed());
        for l in 1..=3 {
            assert!(rec.distribution.band(l).norm() < 1e-10);
        }
    }
}
