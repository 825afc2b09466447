use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use orbit_core::error::Error;
use orbit_core::experiment::{make_sampler, run_experiment, ExperimentConfig, SamplerKind, TiltKind};
use orbit_core::model::{
    load_distribution, load_signal, random_distribution, random_signal, save_distribution, save_signal,
};
use orbit_core::moments::{
    empirical_moments, load_moments, population_first_moment, population_second_moment, save_moments, FirstMoment,
    SecondMoment,
};
use orbit_core::recover::{frequency_march, BaseMode, GroundTruth, RecoveryOptions, SignalRowSet};
use orbit_core::simulate::{
    load_observations, save_observations, sigma_for_snr, NoiseModel, ObservationStream, Sampler,
};

const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

/// Environment variable holding the worker-thread count.
const WORKERS_VAR: &str = "ORBIT_WORKERS";

#[derive(Parser)]
#[command(name = "orbit", version, about = "Recover a 3-D signal and its rotation distribution from second moments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a random signal or distribution.
    #[command(subcommand)]
    Gen(Gen),
    /// Draw noisy rotated copies of a signal.
    Simulate(SimulateArgs),
    /// Population moments of a (signal, distribution) pair, or empirical moments of observations.
    Moments(MomentsArgs),
    /// Run frequency marching on moments or observations.
    Recover(RecoverArgs),
    /// Run a sweep described by a TOML config.
    Experiment(ExperimentArgs),
}

#[derive(Subcommand)]
enum Gen {
    Signal(GenSignalArgs),
    Dist(GenDistArgs),
}

#[derive(Args)]
struct GenSignalArgs {
    #[arg(long = "L", value_parser = clap::value_parser!(u64).range(0..=64))]
    l: u64,
    #[arg(long = "R", value_parser = clap::value_parser!(u64).range(1..))]
    r: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Unconstrained complex coefficients instead of those of a real function.
    #[arg(long)]
    complex: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenDistArgs {
    #[arg(long = "L", value_parser = clap::value_parser!(u64).range(0..=64))]
    l: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    in_plane: bool,
    /// Write the exact Fourier matrices of this sampler's law instead of a random distribution.
    #[arg(long)]
    sampler: Option<SamplerKind>,
    #[command(flatten)]
    params: SamplerParams,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct SamplerParams {
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    #[arg(long, default_value = "haar")]
    tilt: TiltKind,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    signal: PathBuf,
    #[arg(long, default_value = "gaussian-euler")]
    sampler: SamplerKind,
    #[command(flatten)]
    params: SamplerParams,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    #[arg(long, conflicts_with = "snr", required_unless_present = "snr")]
    sigma: Option<f64>,
    #[arg(long)]
    snr: Option<f64>,
    #[arg(long, default_value = "circular")]
    noise: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MomentsArgs {
    #[arg(long, requires = "dist", conflicts_with = "obs")]
    signal: Option<PathBuf>,
    #[arg(long, requires = "signal")]
    dist: Option<PathBuf>,
    #[arg(long, required_unless_present = "signal")]
    obs: Option<PathBuf>,
    /// Noise level to debias with; required with observations.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RecoverArgs {
    #[arg(long, conflicts_with = "obs", required_unless_present = "obs")]
    moments: Option<PathBuf>,
    #[arg(long)]
    obs: Option<PathBuf>,
    /// Noise level to debias with; required with observations.
    #[arg(long)]
    sigma: Option<f64>,
    /// Ground-truth signal, for errors and for --oracle-base.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Ground-truth distribution, for distribution errors.
    #[arg(long, requires = "truth")]
    truth_dist: Option<PathBuf>,
    #[arg(long, requires = "truth")]
    oracle_base: bool,
    #[arg(long)]
    in_plane: bool,
    #[arg(long, default_value = "auto")]
    rows: String,
    #[arg(long)]
    max_condition: Option<f64>,
    /// Exit with status 4 when any stage fails or the march aborts.
    #[arg(long)]
    strict: bool,
    /// Output prefix: <out>_signal.json, <out>_dist.json, <out>_report.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    config: PathBuf,
    #[arg(long = "L")]
    l: Option<usize>,
    #[arg(long = "R", value_parser = clap::value_parser!(u64).range(1..))]
    r: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    seeds: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: Option<u64>,
    #[arg(long, conflicts_with = "snr")]
    sigma: Option<f64>,
    #[arg(long)]
    snr: Option<f64>,
    #[arg(long)]
    sampler: Option<SamplerKind>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    in_plane: bool,
    #[arg(long)]
    oracle_base: bool,
    /// Output prefix; overrides the config's `output`.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Io(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_) => Failure::Usage(e.to_string()),
            Error::Parse { .. } | Error::UnsupportedVersion { .. } | Error::Io { .. } | Error::ShapeMismatch(_) => {
                Failure::Io(e.to_string())
            }
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn parse_noise(s: &str) -> Result<NoiseModel, Failure> {
    match s {
        "circular" => Ok(NoiseModel::Circular),
        "real-symmetric" => Ok(NoiseModel::RealSymmetric),
        _ => Err(usage(format!("--noise: expected circular or real-symmetric, got `{s}`"))),
    }
}

fn parse_rows(s: &str) -> Result<SignalRowSet, Failure> {
    match s {
        "auto" => Ok(SignalRowSet::Auto),
        "full" => Ok(SignalRowSet::Full),
        "proof" => Ok(SignalRowSet::Proof),
        _ => Err(usage(format!("--rows: expected auto, full or proof, got `{s}`"))),
    }
}

fn check_sigma(sigma: f64) -> CmdResult {
    if sigma.is_finite() && sigma >= 0.0 {
        Ok(())
    } else {
        Err(usage(format!("--sigma must be finite and nonnegative, got {sigma}")))
    }
}

fn sampler_from(kind: SamplerKind, p: &SamplerParams) -> Result<Sampler, Failure> {
    make_sampler(kind, p.tau, p.eta, p.tilt).map_err(|e| usage(format!("--sampler: {e}")))
}

fn cmd_gen(g: Gen) -> CmdResult {
    match g {
        Gen::Signal(a) => {
            let x = random_signal(a.l as usize, a.r as usize, a.seed, !a.complex)?;
            save_signal(&a.out, &x)?;
            println!(
                "signal L={} R={} norm={:.6} real={} -> {}",
                x.l_max(),
                x.shells(),
                x.norm(),
                !a.complex,
                a.out.display()
            );
        }
        Gen::Dist(a) => {
            let l = a.l as usize;
            let rho = match a.sampler {
                Some(kind) => {
                    let s = sampler_from(kind, &a.params)?;
                    if a.in_plane && !s.is_in_plane() {
                        return Err(usage(format!("--in-plane conflicts with sampler {}", s.tag())));
                    }
                    s.population_rho_hat(l)?
                }
                None => random_distribution(l, a.seed, a.in_plane),
            };
            save_distribution(&a.out, &rho)?;
            println!(
                "distribution L={} in_plane={} -> {}",
                rho.l_max(),
                rho.is_in_plane(1e-12),
                a.out.display()
            );
        }
    }
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> CmdResult {
    let x = load_signal(&a.signal)?;
    let sampler = sampler_from(a.sampler, &a.params)?;
    let sigma = match (a.sigma, a.snr) {
        (Some(s), _) => {
            check_sigma(s)?;
            s
        }
        (None, Some(snr)) => sigma_for_snr(&x, snr).map_err(|e| usage(format!("--snr: {e}")))?,
        (None, None) => unreachable!("clap requires one of --sigma, --snr"),
    };
    let noise = parse_noise(&a.noise)?;
    let stream = ObservationStream::new(x, sampler, a.n as usize, sigma, noise, a.seed)?;
    let obs = stream.materialize();
    save_observations(&a.out, &obs)?;
    println!(
        "observations n={} sigma={:.6e} snr={:.4} sampler={} -> {}",
        obs.n(),
        sigma,
        obs.snr(),
        stream.sampler().tag(),
        a.out.display()
    );
    Ok(())
}

fn moments_from_observations(path: &Path, sigma: Option<f64>) -> Result<(FirstMoment, SecondMoment), Failure> {
    let sigma = sigma.ok_or_else(|| usage("--sigma is required with raw observations"))?;
    check_sigma(sigma)?;
    let obs = load_observations(path)?;
    Ok(empirical_moments(&obs, sigma, obs.noise_model())?)
}

fn cmd_moments(a: MomentsArgs) -> CmdResult {
    let (m1, m2) = match (&a.signal, &a.dist, &a.obs) {
        (Some(sp), Some(dp), None) => {
            if a.sigma.is_some() {
                return Err(usage("--sigma only applies to observations"));
            }
            let x = load_signal(sp)?;
            let rho = load_distribution(dp)?;
            (population_first_moment(&rho, &x)?, population_second_moment(&rho, &x)?)
        }
        (None, None, Some(op)) => moments_from_observations(op, a.sigma)?,
        _ => return Err(usage("give either --signal and --dist, or --obs")),
    };
    save_moments(&a.out, &m1, &m2)?;
    println!(
        "moments L={} R={} components={} norm={:.6e} -> {}",
        m2.l_max(),
        m2.shells(),
        m2.triples().count(),
        m2.norm(),
        a.out.display()
    );
    Ok(())
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn cmd_recover(a: RecoverArgs) -> CmdResult {
    let (m1, m2) = match (&a.moments, &a.obs) {
        (Some(p), None) => {
            if a.sigma.is_some() {
                return Err(usage("--sigma only applies to observations; moments files are already debiased"));
            }
            load_moments(p)?
        }
        (None, Some(p)) => moments_from_observations(p, a.sigma)?,
        _ => unreachable!("clap enforces exactly one input"),
    };
    let truth = match &a.truth {
        Some(p) => Some(GroundTruth {
            signal: load_signal(p)?,
            distribution: a.truth_dist.as_ref().map(load_distribution).transpose()?,
        }),
        None => None,
    };
    let mut opts = RecoveryOptions {
        mode: if a.oracle_base { BaseMode::Oracle } else { BaseMode::Blind },
        in_plane: a.in_plane,
        signal_rows: parse_rows(&a.rows)?,
        ..RecoveryOptions::default()
    };
    if let Some(c) = a.max_condition {
        opts.max_condition = c;
    }
    opts.validate()?;
    let rec = match frequency_march(&m1, &m2, &opts, truth.as_ref()) {
        Ok(r) => r,
        Err(e) if e.is_numerical() => {
            eprintln!("failed: {e}");
            return if a.strict { Err(Failure::Numerical(e.to_string())) } else { Ok(()) };
        }
        Err(e) => return Err(e.into()),
    };
    let sp = with_suffix(&a.out, "_signal.json");
    let dp = with_suffix(&a.out, "_dist.json");
    let rp = with_suffix(&a.out, "_report.csv");
    save_signal(&sp, &rec.signal)?;
    save_distribution(&dp, &rec.distribution)?;
    std::fs::write(&rp, rec.report.to_csv()).map_err(|e| Error::io(&rp, e))?;
    print!("{}", rec.report.condition_table());
    for s in rec.report.stages.iter().filter(|s| s.status.is_failure()) {
        println!("failed: band {} {} ({}, cond {:.3e})", s.band, s.system, s.status.name(), s.cond);
    }
    if let Some(e) = rec.report.signal_error {
        println!("signal error {e:.3e}");
    }
    if let Some(e) = rec.report.distribution_error {
        println!("distribution error {e:.3e}");
    }
    println!("wrote {}, {}, {}", sp.display(), dp.display(), rp.display());
    if a.strict && rec.report.failed() {
        return Err(Failure::Numerical("one or more stages failed".into()));
    }
    Ok(())
}

fn cmd_experiment(a: ExperimentArgs) -> CmdResult {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    if let Some(v) = a.l {
        cfg.l_max = v;
    }
    if let Some(v) = a.r {
        cfg.shells = v as usize;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.seeds {
        cfg.seeds = v as usize;
    }
    if let Some(v) = a.n {
        cfg.n = v as usize;
    }
    if let Some(v) = a.sigma {
        cfg.sigma = Some(v);
    }
    if let Some(v) = a.snr {
        cfg.snr = v;
        cfg.sigma = None;
    }
    if let Some(v) = a.sampler {
        cfg.sampler = v;
    }
    if let Some(v) = a.tau {
        cfg.tau = v;
    }
    if let Some(v) = a.eta {
        cfg.eta = v;
    }
    if a.in_plane {
        cfg.in_plane = true;
    }
    if a.oracle_base {
        cfg.mode = BaseMode::Oracle;
    }
    cfg.validate()?;
    let prefix = a
        .out
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| a.config.with_extension(""));
    let table = run_experiment(&cfg)?;
    for c in &table.cells {
        let med = c.median_error.map(|v| format!("{v:.4e}")).unwrap_or_else(|| "failed".into());
        println!(
            "cell {:>3}  L={} R={} {} snr={} sigma={} n={}  ok {}/{}  median error {}",
            c.cell,
            c.l_max,
            c.shells,
            c.sampler,
            c.snr.map(|v| v.to_string()).unwrap_or_else(|| "-".into()),
            c.sigma.map(|v| v.to_string()).unwrap_or_else(|| "-".into()),
            c.n.map(|v| v.to_string()).unwrap_or_else(|| "-".into()),
            c.ok,
            c.seeds,
            med
        );
    }
    for p in table.write(&prefix)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn init_workers() -> CmdResult {
    let Ok(v) = std::env::var(WORKERS_VAR) else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| usage(format!("{WORKERS_VAR} must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| usage(format!("{WORKERS_VAR}: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_workers().and_then(|_| match cli.command {
        Command::Gen(g) => cmd_gen(g),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Moments(a) => cmd_moments(a),
        Command::Recover(a) => cmd_recover(a),
        Command::Experiment(a) => cmd_experiment(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Io(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_IO)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_NUMERICAL)
        }
    }
}
