//! Seeded Monte-Carlo sweeps: a TOML config expands into a grid of cells, every (cell, seed) pair
//! runs simulate -> moments -> march, and the results land in CSV and JSON tables.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{random_distribution, random_signal, Distribution};
use crate::moments::{empirical_moments, population_first_moment, population_second_moment};
use crate::recover::{frequency_march, BaseMode, GroundTruth, RecoveryOptions, SignalRowSet, StageReport};
use crate::simulate::{derive_seed, sigma_for_snr, NoiseModel, ObservationStream, Sampler, Tilt};

/// Version of the CSV column contract; bump when a column is added, removed or reordered.
pub const TABLE_VERSION: u32 = 1;

pub const SUMMARY_COLUMNS: [&str; 18] = [
    "cell",
    "L",
    "R",
    "sampler",
    "tau",
    "eta",
    "snr",
    "sigma",
    "n",
    "seeds",
    "ok",
    "median_error",
    "mean_error",
    "median_distribution_error",
    "mean_distribution_error",
    "median_max_cond",
    "max_cond",
    "errors",
];

pub const RUN_COLUMNS: [&str; 15] = [
    "cell",
    "seed",
    "L",
    "R",
    "sampler",
    "snr",
    "sigma",
    "n",
    "status",
    "signal_error",
    "distribution_error",
    "max_cond",
    "flagged_stages",
    "signal_seed",
    "data_seed",
];

pub const STAGE_COLUMNS: [&str; 10] = ["cell", "seed", "band", "kind", "rows", "cols", "cond", "residual", "error", "status"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    SnrSweep,
    NSweep,
    EtaSweep,
    TauSweep,
    CondTable,
    SingleRun,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::SnrSweep => "snr-sweep",
            ExperimentKind::NSweep => "n-sweep",
            ExperimentKind::EtaSweep => "eta-sweep",
            ExperimentKind::TauSweep => "tau-sweep",
            ExperimentKind::CondTable => "cond-table",
            ExperimentKind::SingleRun => "single-run",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    Uniform,
    Restricted,
    #[default]
    GaussianEuler,
    InPlane,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TiltKind {
    #[default]
    Haar,
    GaussianEuler,
    Restricted,
}

fn parse_kebab<T: for<'de> Deserialize<'de>>(what: &str, s: &str) -> Result<T> {
    T::deserialize(serde::de::value::StrDeserializer::<serde::de::value::Error>::new(s))
        .map_err(|_| Error::InvalidArgument(format!("unknown {what} `{s}`")))
}

impl FromStr for SamplerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        parse_kebab("sampler", s)
    }
}

impl FromStr for TiltKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        parse_kebab("tilt", s)
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        parse_kebab("experiment kind", s)
    }
}

/// Builds a sampler from a kind and its parameters; parameters the kind does not use are ignored.
pub fn make_sampler(kind: SamplerKind, tau: f64, eta: f64, tilt: TiltKind) -> Result<Sampler> {
    let s = match kind {
        SamplerKind::Uniform => Sampler::Uniform,
        SamplerKind::Restricted => Sampler::Restricted { eta },
        SamplerKind::GaussianEuler => Sampler::GaussianEuler { tau },
        SamplerKind::InPlane => Sampler::InPlane {
            tilt: match tilt {
                TiltKind::Haar => Tilt::Haar,
                TiltKind::GaussianEuler => Tilt::GaussianEuler { tau },
                TiltKind::Restricted => Tilt::Restricted { eta },
            },
        },
    };
    s.validate()?;
    Ok(s)
}

/// Solver knobs of [`RecoveryOptions`] other than the base mode and the in-plane flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub solver_tolerance: f64,
    pub rank_tolerance: f64,
    pub include_l1_equal_l: bool,
    pub signal_rows: SignalRowSet,
    pub append_first_moment_rows: bool,
    pub max_condition: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        let d = RecoveryOptions::default();
        SolverSettings {
            solver_tolerance: d.solver_tolerance,
            rank_tolerance: d.rank_tolerance,
            include_l1_equal_l: d.include_l1_equal_l,
            signal_rows: d.signal_rows,
            append_first_moment_rows: d.append_first_moment_rows,
            max_condition: d.max_condition,
        }
    }
}

fn d_l() -> usize {
    5
}
fn d_r() -> usize {
    5
}
fn d_one() -> f64 {
    1.0
}
fn d_snr() -> f64 {
    0.5
}
fn d_n() -> usize {
    10_000
}
fn d_seeds() -> usize {
    5
}
fn d_oracle() -> BaseMode {
    BaseMode::Oracle
}
fn d_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(rename = "L", default = "d_l")]
    pub l_max: usize,
    #[serde(rename = "R", default = "d_r")]
    pub shells: usize,
    #[serde(default)]
    pub sampler: SamplerKind,
    #[serde(default = "d_one")]
    pub tau: f64,
    #[serde(default = "d_one")]
    pub eta: f64,
    #[serde(default)]
    pub tilt: TiltKind,
    #[serde(default = "d_snr")]
    pub snr: f64,
    /// Fixed noise level; takes precedence over `snr`.
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default = "d_n")]
    pub n: usize,
    #[serde(default)]
    pub snr_grid: Vec<f64>,
    #[serde(default)]
    pub sigma_grid: Vec<f64>,
    #[serde(default)]
    pub n_grid: Vec<usize>,
    #[serde(default)]
    pub eta_grid: Vec<f64>,
    #[serde(default)]
    pub tau_grid: Vec<f64>,
    #[serde(default)]
    pub r_grid: Vec<usize>,
    #[serde(default = "d_seeds")]
    pub seeds: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_oracle")]
    pub mode: BaseMode,
    #[serde(default)]
    pub in_plane: bool,
    #[serde(default)]
    pub noise: NoiseModel,
    /// Draw signals with the symmetry of a real function (needed by the blind base).
    #[serde(default = "d_true")]
    pub real_signal: bool,
    #[serde(default)]
    pub recovery: SolverSettings,
    /// Output prefix; `<prefix>.csv`, `<prefix>_runs.csv`, `<prefix>_stages.csv`, `<prefix>.json`.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    /// A config of the given kind with every other field at its default.
    pub fn new(kind: ExperimentKind) -> Self {
        ExperimentConfig {
            kind,
            l_max: d_l(),
            shells: d_r(),
            sampler: SamplerKind::default(),
            tau: 1.0,
            eta: 1.0,
            tilt: TiltKind::default(),
            snr: d_snr(),
            sigma: None,
            n: d_n(),
            snr_grid: Vec::new(),
            sigma_grid: Vec::new(),
            n_grid: Vec::new(),
            eta_grid: Vec::new(),
            tau_grid: Vec::new(),
            r_grid: Vec::new(),
            seeds: d_seeds(),
            seed: 0,
            mode: BaseMode::Oracle,
            in_plane: false,
            noise: NoiseModel::default(),
            real_signal: true,
            recovery: SolverSettings::default(),
            output: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::parse("experiment config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn recovery_options(&self) -> RecoveryOptions {
        let s = &self.recovery;
        RecoveryOptions {
            mode: self.mode,
            in_plane: self.in_plane,
            solver_tolerance: s.solver_tolerance,
            rank_tolerance: s.rank_tolerance,
            include_l1_equal_l: s.include_l1_equal_l,
            signal_rows: s.signal_rows,
            append_first_moment_rows: s.append_first_moment_rows,
            max_condition: s.max_condition,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.l_max < 1 {
            return bad("L must be at least 1".into());
        }
        if self.shells < 1 {
            return bad("R must be at least 1".into());
        }
        if self.seeds < 1 {
            return bad("seeds must be at least 1".into());
        }
        if self.n < 1 {
            return bad("n must be at least 1".into());
        }
        if let Some(s) = self.sigma {
            if !(s.is_finite() && s >= 0.0) {
                return bad(format!("sigma must be finite and nonnegative, got {s}"));
            }
        } else if !(self.snr.is_finite() && self.snr > 0.0) {
            return bad(format!("snr must be positive, got {}", self.snr));
        }
        let grid = |name: &str, len: usize| -> Result<()> {
            if len == 0 {
                Err(Error::InvalidArgument(format!("{} needs a nonempty {name}", self.kind.name())))
            } else {
                Ok(())
            }
        };
        match self.kind {
            ExperimentKind::SnrSweep => {
                if !self.snr_grid.is_empty() && !self.sigma_grid.is_empty() {
                    return bad("give snr_grid or sigma_grid, not both".into());
                }
                grid("snr_grid or sigma_grid", self.snr_grid.len() + self.sigma_grid.len())?;
                if self.snr_grid.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                    return bad("snr_grid entries must be positive".into());
                }
                if self.sigma_grid.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
                    return bad("sigma_grid entries must be nonnegative".into());
                }
            }
            ExperimentKind::NSweep => {
                grid("n_grid", self.n_grid.len())?;
                if self.n_grid.contains(&0) {
                    return bad("n_grid entries must be at least 1".into());
                }
            }
            ExperimentKind::EtaSweep => {
                grid("eta_grid", self.eta_grid.len())?;
                let uses_eta = matches!(self.sampler, SamplerKind::Restricted)
                    || (self.sampler == SamplerKind::InPlane && self.tilt == TiltKind::Restricted);
                if !uses_eta {
                    return bad("eta-sweep needs the restricted sampler (or in-plane with restricted tilt)".into());
                }
            }
            ExperimentKind::TauSweep => {
                grid("tau_grid", self.tau_grid.len())?;
                let uses_tau = matches!(self.sampler, SamplerKind::GaussianEuler)
                    || (self.sampler == SamplerKind::InPlane && self.tilt == TiltKind::GaussianEuler);
                if !uses_tau {
                    return bad("tau-sweep needs the gaussian-euler sampler (or in-plane with gaussian-euler tilt)".into());
                }
            }
            ExperimentKind::CondTable => {
                if self.r_grid.contains(&0) {
                    return bad("r_grid entries must be at least 1".into());
                }
            }
            ExperimentKind::SingleRun => {}
        }
        if self.kind != ExperimentKind::CondTable && self.in_plane {
            let s = make_sampler(self.sampler, self.tau, self.eta, self.tilt)?;
            if !s.is_in_plane() {
                return bad(format!("in_plane recovery needs an in-plane sampler, got {}", s.tag()));
            }
        }
        self.recovery_options().validate()
    }

    /// The grid, in output order.
    pub fn cells(&self) -> Result<Vec<Cell>> {
        self.validate()?;
        let level = if let Some(s) = self.sigma {
            NoiseLevel::Sigma(s)
        } else {
            NoiseLevel::Snr(self.snr)
        };
        let base = |index: usize, sampler: Sampler, noise: NoiseLevel, n: usize, shells: usize| Cell {
            index,
            l_max: self.l_max,
            shells,
            sampler,
            noise,
            n,
        };
        let sampler = |tau: f64, eta: f64| make_sampler(self.sampler, tau, eta, self.tilt);
        let cells = match self.kind {
            ExperimentKind::SnrSweep => {
                let levels: Vec<NoiseLevel> = if self.sigma_grid.is_empty() {
                    self.snr_grid.iter().map(|&s| NoiseLevel::Snr(s)).collect()
                } else {
                    self.sigma_grid.iter().map(|&s| NoiseLevel::Sigma(s)).collect()
                };
                let s = sampler(self.tau, self.eta)?;
                levels.into_iter().enumerate().map(|(i, lv)| base(i, s.clone(), lv, self.n, self.shells)).collect()
            }
            ExperimentKind::NSweep => {
                let s = sampler(self.tau, self.eta)?;
                self.n_grid.iter().enumerate().map(|(i, &n)| base(i, s.clone(), level, n, self.shells)).collect()
            }
            ExperimentKind::EtaSweep => self
                .eta_grid
                .iter()
                .enumerate()
                .map(|(i, &eta)| Ok(base(i, sampler(self.tau, eta)?, level, self.n, self.shells)))
                .collect::<Result<Vec<_>>>()?,
            ExperimentKind::TauSweep => self
                .tau_grid
                .iter()
                .enumerate()
                .map(|(i, &tau)| Ok(base(i, sampler(tau, self.eta)?, level, self.n, self.shells)))
                .collect::<Result<Vec<_>>>()?,
            ExperimentKind::CondTable => {
                let rs = if self.r_grid.is_empty() { vec![self.shells] } else { self.r_grid.clone() };
                rs.into_iter()
                    .enumerate()
                    .map(|(i, r)| base(i, Sampler::Uniform, NoiseLevel::Population, 0, r))
                    .collect()
            }
            ExperimentKind::SingleRun => vec![base(0, sampler(self.tau, self.eta)?, level, self.n, self.shells)],
        };
        Ok(cells)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseLevel {
    Snr(f64),
    Sigma(f64),
    /// Exact population moments of a random generic distribution; no observations.
    Population,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub l_max: usize,
    pub shells: usize,
    pub sampler: Sampler,
    pub noise: NoiseLevel,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Ok,
    /// Completed with at least one unstable or zero-matrix stage.
    Flagged,
    Failed,
}

impl RunStatus {
    pub fn name(&self) -> &'static str {
        match self {
            RunStatus::Ok => "ok",
            RunStatus::Flagged => "flagged",
            RunStatus::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub cell: usize,
    pub seed: usize,
    pub signal_seed: u64,
    pub data_seed: u64,
    pub sigma: f64,
    pub status: RunStatus,
    pub signal_error: Option<f64>,
    pub distribution_error: Option<f64>,
    pub max_cond: Option<f64>,
    pub flagged_stages: usize,
    pub message: Option<String>,
    pub stages: Vec<StageReport>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: usize,
    #[serde(rename = "L")]
    pub l_max: usize,
    #[serde(rename = "R")]
    pub shells: usize,
    pub sampler: String,
    pub tau: Option<f64>,
    pub eta: Option<f64>,
    pub snr: Option<f64>,
    pub sigma: Option<f64>,
    pub n: Option<usize>,
    pub seeds: usize,
    pub ok: usize,
    /// Per-seed signal errors in seed order; `None` where the run failed.
    pub errors: Vec<Option<f64>>,
    pub median_error: Option<f64>,
    pub mean_error: Option<f64>,
    pub median_distribution_error: Option<f64>,
    pub mean_distribution_error: Option<f64>,
    pub median_max_cond: Option<f64>,
    pub max_cond: Option<f64>,
    pub mean_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub table_version: u32,
    pub config: ExperimentConfig,
    pub cells: Vec<CellSummary>,
    pub runs: Vec<RunRecord>,
}

pub fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let k = s.len() / 2;
    Some(if s.len() % 2 == 1 { s[k] } else { 0.5 * (s[k - 1] + s[k]) })
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Least-squares slope of log y against log x.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 || x.iter().chain(y).any(|v| !(v.is_finite() && *v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / lx.len() as f64;
    let my = ly.iter().sum::<f64>() / ly.len() as f64;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn sampler_params(s: &Sampler) -> (Option<f64>, Option<f64>) {
    match s {
        Sampler::Restricted { eta } => (None, Some(*eta)),
        Sampler::GaussianEuler { tau } => (Some(*tau), None),
        Sampler::InPlane { tilt: Tilt::GaussianEuler { tau } } => (Some(*tau), None),
        Sampler::InPlane { tilt: Tilt::Restricted { eta } } => (None, Some(*eta)),
        _ => (None, None),
    }
}

fn run_one(cfg: &ExperimentConfig, opts: &RecoveryOptions, cell: &Cell, k: usize) -> RunRecord {
    let start = Instant::now();
    // The signal depends on the seed index only, so every cell of a sweep sees the same signals;
    // rotations and noise are drawn per (cell, seed).
    let signal_seed = derive_seed(cfg.seed, k as u64);
    let data_seed = derive_seed(signal_seed, cell.index as u64 + 1);
    let mut rec = RunRecord {
        cell: cell.index,
        seed: k,
        signal_seed,
        data_seed,
        sigma: 0.0,
        status: RunStatus::Failed,
        signal_error: None,
        distribution_error: None,
        max_cond: None,
        flagged_stages: 0,
        message: None,
        stages: Vec::new(),
        seconds: 0.0,
    };
    let outcome = (|| -> Result<crate::recover::Recovery> {
        let x = random_signal(cell.l_max, cell.shells, signal_seed, cfg.real_signal)?;
        let (truth_rho, m1, m2) = match cell.noise {
            NoiseLevel::Population => {
                let rho = random_distribution(cell.l_max, data_seed, cfg.in_plane);
                let m1 = population_first_moment(&rho, &x)?;
                let m2 = population_second_moment(&rho, &x)?;
                (rho, m1, m2)
            }
            NoiseLevel::Snr(_) | NoiseLevel::Sigma(_) => {
                let sigma = match cell.noise {
                    NoiseLevel::Snr(s) => sigma_for_snr(&x, s)?,
                    NoiseLevel::Sigma(s) => s,
                    NoiseLevel::Population => unreachable!(),
                };
                rec.sigma = sigma;
                let rho: Distribution = cell.sampler.population_rho_hat(cell.l_max)?;
                let stream = ObservationStream::new(x.clone(), cell.sampler.clone(), cell.n, sigma, cfg.noise, data_seed)?;
                let (m1, m2) = empirical_moments(&stream, sigma, cfg.noise)?;
                (rho, m1, m2)
            }
        };
        let truth = GroundTruth {
            signal: x,
            distribution: Some(truth_rho),
        };
        frequency_march(&m1, &m2, opts, Some(&truth))
    })();
    match outcome {
        Ok(r) => {
            let finite = |v: Option<f64>| v.filter(|e| e.is_finite());
            rec.signal_error = finite(r.report.signal_error);
            rec.distribution_error = finite(r.report.distribution_error);
            rec.max_cond = Some(r.report.max_condition());
            rec.flagged_stages = r.report.stages.iter().filter(|s| s.status.is_failure()).count();
            rec.status = if rec.signal_error.is_none() {
                rec.message = Some("non-finite error".into());
                RunStatus::Failed
            } else if rec.flagged_stages > 0 {
                RunStatus::Flagged
            } else {
                RunStatus::Ok
            };
            rec.stages = r.report.stages;
        }
        Err(e) => rec.message = Some(e.to_string()),
    }
    rec.seconds = start.elapsed().as_secs_f64();
    rec
}

fn summarize(cfg: &ExperimentConfig, cell: &Cell, runs: &[RunRecord]) -> CellSummary {
    let errs: Vec<f64> = runs.iter().filter_map(|r| r.signal_error).collect();
    let derrs: Vec<f64> = runs.iter().filter_map(|r| r.distribution_error).collect();
    let conds: Vec<f64> = runs.iter().filter_map(|r| r.max_cond).collect();
    let (tau, eta) = match cell.noise {
        NoiseLevel::Population => (None, None),
        _ => sampler_params(&cell.sampler),
    };
    CellSummary {
        cell: cell.index,
        l_max: cell.l_max,
        shells: cell.shells,
        sampler: match cell.noise {
            NoiseLevel::Population => if cfg.in_plane { "random-generic-in-plane" } else { "random-generic" }.into(),
            _ => cell.sampler.tag(),
        },
        tau,
        eta,
        snr: match cell.noise {
            NoiseLevel::Snr(s) => Some(s),
            _ => None,
        },
        sigma: match cell.noise {
            NoiseLevel::Sigma(s) => Some(s),
            NoiseLevel::Population => Some(0.0),
            NoiseLevel::Snr(_) => None,
        },
        n: (cell.noise != NoiseLevel::Population).then_some(cell.n),
        seeds: runs.len(),
        ok: runs.iter().filter(|r| r.status != RunStatus::Failed).count(),
        errors: runs.iter().map(|r| r.signal_error).collect(),
        median_error: median(&errs),
        mean_error: mean(&errs),
        median_distribution_error: median(&derrs),
        mean_distribution_error: mean(&derrs),
        median_max_cond: median(&conds),
        max_cond: conds.iter().copied().reduce(f64::max),
        mean_seconds: mean(&runs.iter().map(|r| r.seconds).collect::<Vec<_>>()).unwrap_or(0.0),
    }
}

/// Runs every (cell, seed) pair on the current rayon pool. Failures are recorded, never raised.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let cells = cfg.cells()?;
    let opts = cfg.recovery_options();
    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..cfg.seeds).map(move |k| (c, k))).collect();
    let runs: Vec<RunRecord> = jobs.par_iter().map(|&(c, k)| run_one(cfg, &opts, &cells[c], k)).collect();
    let summaries = cells
        .iter()
        .map(|c| summarize(cfg, c, &runs[c.index * cfg.seeds..(c.index + 1) * cfg.seeds]))
        .collect();
    Ok(ResultTable {
        table_version: TABLE_VERSION,
        config: cfg.clone(),
        cells: summaries,
        runs,
    })
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn num(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        "inf".into()
    }
}

fn csv_string(header: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

impl ResultTable {
    /// One row per cell. Timings are left to the JSON so that reruns give identical bytes.
    pub fn summary_csv(&self) -> String {
        let rows = self
            .cells
            .iter()
            .map(|c| {
                vec![
                    c.cell.to_string(),
                    c.l_max.to_string(),
                    c.shells.to_string(),
                    c.sampler.clone(),
                    opt(c.tau),
                    opt(c.eta),
                    opt(c.snr),
                    opt(c.sigma),
                    opt(c.n),
                    c.seeds.to_string(),
                    c.ok.to_string(),
                    opt(c.median_error),
                    opt(c.mean_error),
                    opt(c.median_distribution_error),
                    opt(c.mean_distribution_error),
                    opt(c.median_max_cond.map(num)),
                    opt(c.max_cond.map(num)),
                    c.errors
                        .iter()
                        .map(|e| e.map(|v| v.to_string()).unwrap_or_else(|| "failed".into()))
                        .collect::<Vec<_>>()
                        .join(";"),
                ]
            })
            .collect();
        csv_string(&SUMMARY_COLUMNS, rows)
    }

    /// Long format, one row per (cell, seed).
    pub fn runs_csv(&self) -> String {
        let rows = self
            .runs
            .iter()
            .map(|r| {
                let c = &self.cells[r.cell];
                vec![
                    r.cell.to_string(),
                    r.seed.to_string(),
                    c.l_max.to_string(),
                    c.shells.to_string(),
                    c.sampler.clone(),
                    opt(c.snr),
                    r.sigma.to_string(),
                    opt(c.n),
                    r.status.name().into(),
                    r.signal_error.map(|v| v.to_string()).unwrap_or_else(|| "failed".into()),
                    r.distribution_error.map(|v| v.to_string()).unwrap_or_else(|| "failed".into()),
                    opt(r.max_cond.map(num)),
                    r.flagged_stages.to_string(),
                    r.signal_seed.to_string(),
                    r.data_seed.to_string(),
                ]
            })
            .collect();
        csv_string(&RUN_COLUMNS, rows)
    }

    /// One row per (cell, seed, band, system).
    pub fn stages_csv(&self) -> String {
        let rows = self
            .runs
            .iter()
            .flat_map(|r| {
                r.stages.iter().map(move |s| {
                    vec![
                        r.cell.to_string(),
                        r.seed.to_string(),
                        s.band.to_string(),
                        s.system.to_string(),
                        s.rows.to_string(),
                        s.cols.to_string(),
                        num(s.cond),
                        num(s.residual),
                        opt(s.error.map(num)),
                        s.status.name().into(),
                    ]
                })
            })
            .collect();
        csv_string(&STAGE_COLUMNS, rows)
    }

    /// Median condition number per band, one signal and one distribution column per cell.
    pub fn condition_table_csv(&self) -> String {
        use crate::error::SystemKind;
        let l_max = self.cells.iter().map(|c| c.l_max).max().unwrap_or(0);
        let mut header = vec!["band".to_string()];
        for c in &self.cells {
            let label = if self.config.kind == ExperimentKind::CondTable {
                format!("R{}", c.shells)
            } else {
                format!("cell{}", c.cell)
            };
            header.push(format!("{label}_signal"));
            header.push(format!("{label}_distribution"));
        }
        let cell_median = |cell: usize, band: usize, sys: SystemKind| {
            let v: Vec<f64> = self
                .runs
                .iter()
                .filter(|r| r.cell == cell)
                .filter_map(|r| r.stages.iter().find(|s| s.band == band && s.system == sys).map(|s| s.cond))
                .collect();
            median(&v).map(num).unwrap_or_else(|| "-".into())
        };
        let rows = (1..=l_max)
            .map(|band| {
                let mut row = vec![band.to_string()];
                for c in &self.cells {
                    row.push(cell_median(c.cell, band, SystemKind::Signal));
                    row.push(cell_median(c.cell, band, SystemKind::Distribution));
                }
                row
            })
            .collect();
        let refs: Vec<&str> = header.iter().map(String::as_str).collect();
        csv_string(&refs, rows)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("finite-or-null fields serialize")
    }

    /// Writes every table next to `prefix` and returns the paths written.
    pub fn write(&self, prefix: &Path) -> Result<Vec<PathBuf>> {
        if let Some(dir) = prefix.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let stem = prefix.to_string_lossy().into_owned();
        let mut files = vec![
            (format!("{stem}.csv"), self.summary_csv()),
            (format!("{stem}_runs.csv"), self.runs_csv()),
            (format!("{stem}_stages.csv"), self.stages_csv()),
            (format!("{stem}.json"), self.to_json()),
        ];
        if self.config.kind == ExperimentKind::CondTable {
            files.push((format!("{stem}_cond.csv"), self.condition_table_csv()));
        }
        let mut out = Vec::new();
        for (p, text) in files {
            std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
            out.push(PathBuf::from(p));
        }
        Ok(out)
    }

    /// Median signal errors of the cells, in grid order (`None` where every seed failed).
    pub fn median_errors(&self) -> Vec<Option<f64>> {
        self.cells.iter().map(|c| c.median_error).collect()
    }
}
