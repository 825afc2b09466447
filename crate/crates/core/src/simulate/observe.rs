use std::ops::Range;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sampler::{derive_seed, index_rng, RotationSample, Sampler};
use crate::error::{Error, Result};
use crate::harmonics::{wigner_table, Rotation};
use crate::model::{Signal, FORMAT_VERSION};
use crate::reduce::tree_map_reduce;

/// Flat layout of one observation: bands in order, each band stored shell by shell with
/// m ascending, i.e. index(l, s, m) = R l^2 + s (2l+1) + (m + l).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub l_max: usize,
    pub shells: usize,
}

impl Layout {
    pub fn of(x: &Signal) -> Self {
        Layout {
            l_max: x.l_max(),
            shells: x.shells(),
        }
    }

    pub fn len(&self) -> usize {
        self.shells * (self.l_max + 1) * (self.l_max + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn band_offset(&self, l: usize) -> usize {
        self.shells * l * l
    }

    /// Start of the length-(2l+1) block for band l, shell s.
    pub fn block(&self, l: usize, s: usize) -> usize {
        self.band_offset(l) + s * (2 * l + 1)
    }

    pub fn pack(&self, x: &Signal) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.len());
        for b in x.bands() {
            // column-major storage already has shells outermost
            out.extend_from_slice(b.as_slice());
        }
        out
    }

    pub fn unpack(&self, flat: &[Complex64]) -> Signal {
        let bands = (0..=self.l_max)
            .map(|l| {
                let o = self.band_offset(l);
                DMatrix::from_column_slice(2 * l + 1, self.shells, &flat[o..o + (2 * l + 1) * self.shells])
            })
            .collect();
        Signal::new(bands).expect("layout shapes are consistent")
    }
}

/// Noise law for one coefficient vector; every coefficient has E|e|^2 = sigma^2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseModel {
    /// Independent circular complex Gaussians: real and imaginary parts N(0, sigma^2/2).
    #[default]
    Circular,
    /// Noise of a real-valued function: e_{-m} = (-1)^m conj(e_m), e_0 real N(0, sigma^2).
    RealSymmetric,
}

impl NoiseModel {
    /// E[e_m e_{-m}] / sigma^2 for a single band and shell.
    pub fn pairing(&self, m: i64) -> f64 {
        match self {
            NoiseModel::Circular => 0.0,
            NoiseModel::RealSymmetric => {
                if m.rem_euclid(2) == 0 {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            NoiseModel::Circular => "circular",
            NoiseModel::RealSymmetric => "real-symmetric",
        }
    }

    /// Adds noise to `y` (one observation in `layout`) and returns the added energy.
    pub fn add<R: Rng>(&self, rng: &mut R, sigma: f64, layout: &Layout, y: &mut [Complex64]) -> f64 {
        if sigma == 0.0 {
            return 0.0;
        }
        let h = sigma * std::f64::consts::FRAC_1_SQRT_2;
        let mut energy = 0.0;
        match self {
            NoiseModel::Circular => {
                for v in y.iter_mut() {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    let e = Complex64::new(h * re, h * im);
                    energy += e.norm_sqr();
                    *v += e;
                }
            }
            NoiseModel::RealSymmetric => {
                for l in 0..=layout.l_max {
                    let j = l as i64;
                    for s in 0..layout.shells {
                        let o = layout.block(l, s);
                        let z: f64 = rng.sample(StandardNormal);
                        y[o + l] += sigma * z;
                        energy += (sigma * z).powi(2);
                        for m in 1..=j {
                            let re: f64 = rng.sample(StandardNormal);
                            let im: f64 = rng.sample(StandardNormal);
                            let e = Complex64::new(h * re, h * im);
                            y[o + (j + m) as usize] += e;
                            y[o + (j - m) as usize] += e.conj() * self.pairing(m);
                            energy += 2.0 * e.norm_sqr();
                        }
                    }
                }
            }
        }
        energy
    }
}

/// Anything that can produce observations by index range.
pub trait ObservationSource: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn layout(&self) -> Layout;

    /// Writes observations `range` back to back into `out`.
    fn fill(&self, range: Range<usize>, out: &mut [Complex64]);
}

/// D^l(g) X_l for every band, written in `layout` order.
pub(crate) fn rotate_into(table: &crate::harmonics::WignerTable, x: &Signal, g: &Rotation, out: &mut [Complex64]) {
    let layout = Layout::of(x);
    let d = table.big_d_all(x.l_max(), g);
    for (l, (dl, xl)) in d.iter().zip(x.bands()).enumerate() {
        let y = dl * xl;
        let o = layout.band_offset(l);
        out[o..o + y.len()].copy_from_slice(y.as_slice());
    }
}

/// Materialized observations y_i = D(g_i) x + e_i.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    layout: Layout,
    sigma: f64,
    noise: NoiseModel,
    data: Vec<Complex64>,
    signal_norm: f64,
    noise_energy: f64,
}

impl ObservationSet {
    pub fn from_parts(layout: Layout, sigma: f64, noise: NoiseModel, data: Vec<Complex64>) -> Result<Self> {
        let w = layout.len();
        if data.is_empty() || data.len() % w != 0 {
            return Err(Error::ShapeMismatch(format!(
                "observation data of length {} is not a positive multiple of {w}",
                data.len()
            )));
        }
        Ok(ObservationSet {
            layout,
            sigma,
            noise,
            data,
            signal_norm: f64::NAN,
            noise_energy: f64::NAN,
        })
    }

    pub fn n(&self) -> usize {
        self.data.len() / self.layout.len()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn noise_model(&self) -> NoiseModel {
        self.noise
    }

    pub fn observation(&self, i: usize) -> &[Complex64] {
        let w = self.layout.len();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn as_signal(&self, i: usize) -> Signal {
        self.layout.unpack(self.observation(i))
    }

    /// ||x||_F / sqrt(mean_i ||e_i||^2); NaN when the set was not simulated here.
    pub fn snr(&self) -> f64 {
        realized_snr(self.signal_norm, self.noise_energy, self.n())
    }

    /// Mean noise energy per coefficient, an estimate of sigma^2; NaN when unknown.
    pub fn mean_noise_power(&self) -> f64 {
        self.noise_energy / (self.n() * self.layout.len()) as f64
    }
}

fn realized_snr(signal_norm: f64, noise_energy: f64, n: usize) -> f64 {
    let rms = (noise_energy / n as f64).sqrt();
    if rms == 0.0 {
        f64::INFINITY
    } else {
        signal_norm / rms
    }
}

impl ObservationSource for ObservationSet {
    fn len(&self) -> usize {
        self.n()
    }

    fn layout(&self) -> Layout {
        self.layout
    }

    fn fill(&self, range: Range<usize>, out: &mut [Complex64]) {
        let w = self.layout.len();
        out.copy_from_slice(&self.data[range.start * w..range.end * w]);
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma.is_finite() && sigma >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("sigma must be finite and nonnegative, got {sigma}")))
    }
}

/// y_i = D(g_i) x + e_i for the given rotations; noise for index i comes from stream i of `seed`.
pub fn generate_observations(
    x: &Signal,
    rotations: &RotationSample,
    sigma: f64,
    noise: NoiseModel,
    seed: u64,
) -> Result<ObservationSet> {
    check_sigma(sigma)?;
    if rotations.is_empty() {
        return Err(Error::InvalidArgument("generate_observations: no rotations".into()));
    }
    let layout = Layout::of(x);
    let w = layout.len();
    let table = wigner_table(x.l_max());
    let mut data = vec![Complex64::new(0.0, 0.0); w * rotations.len()];
    let energies: Vec<f64> = data
        .par_chunks_mut(w)
        .zip(rotations.rotations.par_iter())
        .enumerate()
        .map(|(i, (y, g))| {
            rotate_into(&table, x, g, y);
            noise.add(&mut index_rng(seed, i as u64), sigma, &layout, y)
        })
        .collect();
    Ok(ObservationSet {
        layout,
        sigma,
        noise,
        data,
        signal_norm: x.norm(),
        noise_energy: energies.iter().sum(),
    })
}

/// Observations generated on demand; nothing of size n is ever held in memory.
#[derive(Debug, Clone)]
pub struct ObservationStream {
    x: Signal,
    sampler: Sampler,
    n: usize,
    sigma: f64,
    noise: NoiseModel,
    rotation_seed: u64,
    noise_seed: u64,
}

const SNR_CHUNK: usize = 4096;

impl ObservationStream {
    pub fn new(x: Signal, sampler: Sampler, n: usize, sigma: f64, noise: NoiseModel, seed: u64) -> Result<Self> {
        check_sigma(sigma)?;
        sampler.validate()?;
        if n == 0 {
            return Err(Error::InvalidArgument("observation stream needs n >= 1".into()));
        }
        Ok(ObservationStream {
            x,
            sampler,
            n,
            sigma,
            noise,
            rotation_seed: derive_seed(seed, 0),
            noise_seed: derive_seed(seed, 1),
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn noise_model(&self) -> NoiseModel {
        self.noise
    }

    pub fn signal(&self) -> &Signal {
        &self.x
    }

    pub fn sampler(&self) -> &Sampler {
        &self.sampler
    }

    pub fn rotations(&self) -> RotationSample {
        RotationSample {
            rotations: (0..self.n as u64)
                .into_par_iter()
                .map(|i| self.sampler.rotation(self.rotation_seed, i))
                .collect(),
            sampler_tag: self.sampler.tag(),
        }
    }

    /// Realized SNR, regenerating only the noise.
    pub fn realized_snr(&self) -> f64 {
        realized_snr(self.x.norm(), self.noise_energy(), self.n)
    }

    /// Total noise energy sum_i ||e_i||^2.
    pub fn noise_energy(&self) -> f64 {
        let layout = Layout::of(&self.x);
        tree_map_reduce(
            self.n,
            SNR_CHUNK,
            |r| {
                let mut y = vec![Complex64::new(0.0, 0.0); layout.len()];
                r.map(|i| self.noise.add(&mut index_rng(self.noise_seed, i as u64), self.sigma, &layout, &mut y))
                    .sum::<f64>()
            },
            |a, b| a + b,
        )
        .unwrap_or(0.0)
    }

    pub fn materialize(&self) -> ObservationSet {
        let layout = Layout::of(&self.x);
        let mut data = vec![Complex64::new(0.0, 0.0); layout.len() * self.n];
        self.fill(0..self.n, &mut data);
        let mut set = ObservationSet::from_parts(layout, self.sigma, self.noise, data).expect("n >= 1");
        set.signal_norm = self.x.norm();
        set.noise_energy = self.noise_energy();
        set
    }
}

impl ObservationSource for ObservationStream {
    fn len(&self) -> usize {
        self.n
    }

    fn layout(&self) -> Layout {
        Layout::of(&self.x)
    }

    fn fill(&self, range: Range<usize>, out: &mut [Complex64]) {
        let layout = Layout::of(&self.x);
        let w = layout.len();
        let table = wigner_table(self.x.l_max());
        for (k, i) in range.enumerate() {
            let y = &mut out[k * w..(k + 1) * w];
            let g = self.sampler.rotation(self.rotation_seed, i as u64);
            rotate_into(&table, &self.x, &g, y);
            self.noise.add(&mut index_rng(self.noise_seed, i as u64), self.sigma, &layout, y);
        }
    }
}

/// sigma giving a target SNR for signal x: sigma = ||x|| / (snr sqrt(R (L+1)^2)).
pub fn sigma_for_snr(x: &Signal, snr: f64) -> Result<f64> {
    if !(snr.is_finite() && snr > 0.0) {
        return Err(Error::InvalidArgument(format!("snr must be positive and finite, got {snr}")));
    }
    Ok(x.norm() / (snr * (x.coefficient_count() as f64).sqrt()))
}

#[derive(Serialize, Deserialize)]
struct ObservationDoc {
    format_version: u32,
    kind: String,
    #[serde(rename = "L")]
    l_max: usize,
    #[serde(rename = "R")]
    shells: usize,
    sigma: f64,
    noise: NoiseModel,
    /// realized ||x||_F and total noise energy, when the set was simulated
    #[serde(default, skip_serializing_if = "Option::is_none")]
    signal_norm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    noise_energy: Option<f64>,
    observations: Vec<FlatDoc>,
}

#[derive(Serialize, Deserialize)]
struct FlatDoc {
    re: Vec<f64>,
    im: Vec<f64>,
}

pub fn observations_to_json(obs: &ObservationSet) -> String {
    let doc = ObservationDoc {
        format_version: FORMAT_VERSION,
        kind: "observations".into(),
        l_max: obs.layout.l_max,
        shells: obs.layout.shells,
        sigma: obs.sigma,
        noise: obs.noise,
        signal_norm: Some(obs.signal_norm).filter(|v| v.is_finite()),
        noise_energy: Some(obs.noise_energy).filter(|v| v.is_finite()),
        observations: (0..obs.n())
            .map(|i| {
                let y = obs.observation(i);
                FlatDoc {
                    re: y.iter().map(|z| z.re).collect(),
                    im: y.iter().map(|z| z.im).collect(),
                }
            })
            .collect(),
    };
    serde_json::to_string(&doc).expect("plain data serializes")
}

fn observations_from_json_ctx(ctx: &str, text: &str) -> Result<ObservationSet> {
    crate::model::io::parse_header(ctx, text, "observations")?;
    let doc: ObservationDoc = serde_json::from_str(text).map_err(|e| Error::parse(ctx, e.to_string()))?;
    let layout = Layout {
        l_max: doc.l_max,
        shells: doc.shells,
    };
    if doc.shells == 0 {
        return Err(Error::parse(ctx, "field `R` must be at least 1"));
    }
    let w = layout.len();
    let mut data = Vec::with_capacity(w * doc.observations.len());
    for (i, o) in doc.observations.iter().enumerate() {
        if o.re.len() != w || o.im.len() != w {
            return Err(Error::parse(
                ctx,
                format!("observation {i} has {}/{} entries, expected {w}", o.re.len(), o.im.len()),
            ));
        }
        data.extend(o.re.iter().zip(&o.im).map(|(&a, &b)| Complex64::new(a, b)));
    }
    if data.is_empty() {
        return Err(Error::parse(ctx, "no observations"));
    }
    check_sigma(doc.sigma).map_err(|e| Error::parse(ctx, e.to_string()))?;
    let mut set = ObservationSet::from_parts(layout, doc.sigma, doc.noise, data)?;
    if let (Some(a), Some(b)) = (doc.signal_norm, doc.noise_energy) {
        set.signal_norm = a;
        set.noise_energy = b;
    }
    Ok(set)
}

pub fn observations_from_json(text: &str) -> Result<ObservationSet> {
    observations_from_json_ctx("observations document", text)
}

pub fn save_observations(path: impl AsRef<Path>, obs: &ObservationSet) -> Result<()> {
    let p = path.as_ref();
    std::fs::write(p, observations_to_json(obs)).map_err(|e| Error::io(p, e))
}

pub fn load_observations(path: impl AsRef<Path>) -> Result<ObservationSet> {
    let p = path.as_ref();
    let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
    observations_from_json_ctx(&p.display().to_string(), &text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::random_signal;
    use crate::simulate::sample_uniform;

    #[test]
    fn layout_round_trip() {
        let x = random_signal(3, 2, 1, false).unwrap();
        let l = Layout::of(&x);
        assert_eq!(l.unpack(&l.pack(&x)), x);
        assert_eq!(l.len(), 32);
        assert_eq!(l.block(2, 1), 2 * 4 + 5);
    }

    #[test]
    fn noiseless_identity_returns_signal() {
        let x = random_signal(2, 2, 1, false).unwrap();
        let rots = RotationSample {
            rotations: vec![Rotation::identity()],
            sampler_tag: "identity".into(),
        };
        let obs = generate_observations(&x, &rots, 0.0, NoiseModel::Circular, 3).unwrap();
        assert_eq!(obs.as_signal(0), x);
        assert!(obs.snr().is_infinite());
    }

    #[test]
    fn real_symmetric_noise_keeps_symmetry() {
        let x = random_signal(3, 2, 1, true).unwrap();
        let rots = sample_uniform(20, 4);
        let obs = generate_observations(&x, &rots, 0.7, NoiseModel::RealSymmetric, 5).unwrap();
        for i in 0..obs.n() {
            assert!(obs.as_signal(i).is_real_symmetric(1e-12));
        }
    }

    #[test]
    fn noise_power_matches_sigma() {
        let x = random_signal(2, 3, 1, false).unwrap();
        for noise in [NoiseModel::Circular, NoiseModel::RealSymmetric] {
            let n = 20_000;
            let obs = generate_observations(&x, &sample_uniform(n, 1), 1.3, noise, 2).unwrap();
            let p = obs.mean_noise_power();
            assert!((p / 1.69 - 1.0).abs() < 5.0 / (n as f64).sqrt(), "{noise:?} {p}");
        }
    }

    #[test]
    fn stream_matches_materialized_and_set_snr() {
        let x = random_signal(2, 2, 8, false).unwrap();
        let s = ObservationStream::new(x.clone(), Sampler::GaussianEuler { tau: 1.0 }, 50, 0.2, NoiseModel::Circular, 4).unwrap();
        let set = s.materialize();
        let mut buf = vec![Complex64::new(0.0, 0.0); Layout::of(&x).len() * 10];
        s.fill(20..30, &mut buf);
        for k in 0..10 {
            assert_eq!(&buf[k * 18..(k + 1) * 18], set.observation(20 + k));
        }
        assert!((set.snr() - s.realized_snr()).abs() < 1e-12 * s.realized_snr());
    }

    #[test]
    fn json_round_trip() {
        let x = random_signal(2, 2, 8, true).unwrap();
        let obs = generate_observations(&x, &sample_uniform(5, 1), 0.1, NoiseModel::RealSymmetric, 1).unwrap();
        let back = observations_from_json(&observations_to_json(&obs)).unwrap();
        assert_eq!(back.n(), 5);
        for i in 0..5 {
            assert_eq!(back.observation(i), obs.observation(i));
        }
        assert_eq!(back.noise_model(), NoiseModel::RealSymmetric);
    }
}
