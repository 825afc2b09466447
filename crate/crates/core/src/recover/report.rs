use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::SystemKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageStatus {
    Ok,
    /// Condition number above the configured limit (or infinite).
    Unstable,
    /// Relative residual above the solver tolerance: the moments are not exactly consistent.
    Inconsistent,
    /// Every coefficient vanished; the band was set to zero.
    ZeroMatrix,
}

impl StageStatus {
    pub fn name(&self) -> &'static str {
        match self {
            StageStatus::Ok => "ok",
            StageStatus::Unstable => "unstable",
            StageStatus::Inconsistent => "inconsistent",
            StageStatus::ZeroMatrix => "zero-matrix",
        }
    }

    /// Whether the stage's output should be distrusted.
    pub fn is_failure(&self) -> bool {
        matches!(self, StageStatus::Unstable | StageStatus::ZeroMatrix)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub band: usize,
    pub system: SystemKind,
    pub rows: usize,
    pub cols: usize,
    pub cond: f64,
    pub residual: f64,
    pub error: Option<f64>,
    pub status: StageStatus,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub stages: Vec<StageReport>,
    pub base_cond: f64,
    pub base_residual: f64,
    pub gram_eigenvalues: Vec<f64>,
    pub reflection: Option<(f64, f64)>,
    pub signal_error: Option<f64>,
    pub distribution_error: Option<f64>,
    pub base_seconds: f64,
    pub total_seconds: f64,
}

pub const REPORT_COLUMNS: [&str; 9] = ["band", "kind", "rows", "cols", "cond", "residual", "error", "status", "seconds"];

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:e}")
    } else {
        "inf".into()
    }
}

impl RecoveryReport {
    pub fn stage(&self, band: usize, system: SystemKind) -> Option<&StageReport> {
        self.stages.iter().find(|s| s.band == band && s.system == system)
    }

    pub fn max_condition(&self) -> f64 {
        self.stages.iter().map(|s| s.cond).fold(1.0, f64::max)
    }

    pub fn failed(&self) -> bool {
        self.stages.iter().any(|s| s.status.is_failure())
    }

    /// One row per band per system.
    pub fn to_csv(&self) -> String {
        let mut out = REPORT_COLUMNS.join(",");
        out.push('\n');
        for s in &self.stages {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{:.6}",
                s.band,
                s.system,
                s.rows,
                s.cols,
                num(s.cond),
                num(s.residual),
                s.error.map(num).unwrap_or_default(),
                s.status.name(),
                s.seconds
            );
        }
        out
    }

    /// Condition numbers side by side per band, signal then distribution.
    pub fn condition_table(&self) -> String {
        let bands = self.stages.iter().map(|s| s.band).max().unwrap_or(0);
        let mut out = format!("{:>4}  {:>12}  {:>12}\n", "band", "signal", "distribution");
        for l in 1..=bands {
            let cell = |k| self.stage(l, k).map(|s| format!("{:.2}", s.cond)).unwrap_or_else(|| "-".into());
            let _ = writeln!(out, "{:>4}  {:>12}  {:>12}", l, cell(SystemKind::Signal), cell(SystemKind::Distribution));
        }
        out
    }
}
