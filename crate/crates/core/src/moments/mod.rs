//! First and second moments of rotated signals, stored per isotypic component.
//!
//! The second-moment component (l1; l2, l3) holds, for every m in -l1..l1 and shells (s2, s3),
//! E[ sum_{k2+k3=m} <l2 k2 l3 k3 | l1 m> y^{l2}_{k2}[s2] y^{l3}_{k3}[s3] ].

mod empirical;
mod io;
mod quad;

pub use empirical::{empirical_first_moment, empirical_moments, empirical_second_moment, noise_bias};
pub use io::{load_moments, moments_from_json, moments_to_json, save_moments};
pub use quad::{
    quadrature_first_moment, quadrature_moments, quadrature_moments_for, quadrature_second_moment, REFINEMENT_THRESHOLD,
};

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harmonics::cg_table;
use crate::model::{Distribution, Signal};

/// Where a moment came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleCount {
    Population,
    Samples(u64),
}

/// Per band l, the (2l+1) x R matrix E[D^l(g)] X_l = rho_hat_l^H X_l.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstMoment {
    bands: Signal,
    pub n_used: SampleCount,
    pub warnings: Vec<String>,
}

impl FirstMoment {
    pub fn new(bands: Signal, n_used: SampleCount) -> Self {
        FirstMoment {
            bands,
            n_used,
            warnings: Vec::new(),
        }
    }

    pub fn l_max(&self) -> usize {
        self.bands.l_max()
    }

    pub fn shells(&self) -> usize {
        self.bands.shells()
    }

    pub fn band(&self, l: usize) -> &nalgebra::DMatrix<Complex64> {
        self.bands.band(l)
    }

    pub fn as_signal(&self) -> &Signal {
        &self.bands
    }
}

pub type Triple = (usize, usize, usize);

/// All (l1, l2, l3) with every band at most L and |l2 - l3| <= l1 <= l2 + l3.
pub fn admissible_triples(l_max: usize) -> Vec<Triple> {
    let mut v = Vec::new();
    for l1 in 0..=l_max {
        for l2 in 0..=l_max {
            for l3 in 0..=l_max {
                if l1 >= l2.abs_diff(l3) && l1 <= l2 + l3 {
                    v.push((l1, l2, l3));
                }
            }
        }
    }
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecondMoment {
    l_max: usize,
    shells: usize,
    components: BTreeMap<Triple, Vec<Complex64>>,
    /// Noise level removed by debiasing (0 for population moments).
    pub sigma_used: f64,
    pub n_used: SampleCount,
    pub warnings: Vec<String>,
}

impl SecondMoment {
    pub(crate) fn zeros(l_max: usize, shells: usize, n_used: SampleCount) -> Self {
        let components = admissible_triples(l_max)
            .into_iter()
            .map(|t| (t, vec![Complex64::new(0.0, 0.0); (2 * t.0 + 1) * shells * shells]))
            .collect();
        SecondMoment {
            l_max,
            shells,
            components,
            sigma_used: 0.0,
            n_used,
            warnings: Vec::new(),
        }
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn shells(&self) -> usize {
        self.shells
    }

    /// Flat position of (m, s2, s3) inside a component; m is the offset index m + l1.
    #[inline]
    pub fn index(&self, m_idx: usize, s2: usize, s3: usize) -> usize {
        (m_idx * self.shells + s2) * self.shells + s3
    }

    pub fn component(&self, l1: usize, l2: usize, l3: usize) -> Option<&[Complex64]> {
        self.components.get(&(l1, l2, l3)).map(|v| v.as_slice())
    }

    pub(crate) fn component_mut(&mut self, t: Triple) -> &mut Vec<Complex64> {
        self.components.get_mut(&t).expect("admissible triple")
    }

    /// Entry (l1; l2 s2, l3 s3)[m] with m in -l1..l1; zero outside the admissible set.
    pub fn entry(&self, l1: usize, l2: usize, l3: usize, m: i64, s2: usize, s3: usize) -> Complex64 {
        match self.component(l1, l2, l3) {
            Some(c) => c[self.index((m + l1 as i64) as usize, s2, s3)],
            None => Complex64::new(0.0, 0.0),
        }
    }

    pub fn triples(&self) -> impl Iterator<Item = &Triple> {
        self.components.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Triple, &Vec<Complex64>)> {
        self.components.iter()
    }

    pub fn component_norm(&self, l1: usize, l2: usize, l3: usize) -> f64 {
        self.component(l1, l2, l3)
            .map(|c| c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
            .unwrap_or(0.0)
    }

    pub fn norm(&self) -> f64 {
        self.components
            .values()
            .flat_map(|c| c.iter())
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Largest entrywise difference against another moment of the same shape.
    pub fn max_abs_diff(&self, other: &SecondMoment) -> Result<f64> {
        if self.l_max != other.l_max || self.shells != other.shells {
            return Err(Error::ShapeMismatch("second moments of different shapes".into()));
        }
        Ok(self
            .components
            .iter()
            .flat_map(|(t, a)| a.iter().zip(&other.components[t]).map(|(x, y)| (x - y).norm()))
            .fold(0.0, f64::max))
    }

    /// Largest violation of (l1; l2 s2, l3 s3)[m] = (-1)^{l2+l3-l1} (l1; l3 s3, l2 s2)[m].
    pub fn swap_symmetry_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (&(l1, l2, l3), c) in &self.components {
            let other = &self.components[&(l1, l3, l2)];
            let sign = if (l2 + l3 - l1) % 2 == 0 { 1.0 } else { -1.0 };
            for m in 0..2 * l1 + 1 {
                for s2 in 0..self.shells {
                    for s3 in 0..self.shells {
                        let d = c[self.index(m, s2, s3)] - other[self.index(m, s3, s2)] * sign;
                        worst = worst.max(d.norm());
                    }
                }
            }
        }
        worst
    }
}

fn check_pair(rho: &Distribution, x: &Signal) -> Result<()> {
    if rho.l_max() < x.l_max() {
        return Err(Error::ShapeMismatch(format!(
            "distribution has bands through {} but the signal needs {}",
            rho.l_max(),
            x.l_max()
        )));
    }
    Ok(())
}

/// Band l is rho_hat_l^H X_l.
pub fn population_first_moment(rho: &Distribution, x: &Signal) -> Result<FirstMoment> {
    check_pair(rho, x)?;
    let bands = (0..=x.l_max()).map(|l| rho.band(l).adjoint() * x.band(l)).collect();
    Ok(FirstMoment::new(Signal::new(bands)?, SampleCount::Population))
}

pub(crate) fn column(m: &nalgebra::DMatrix<Complex64>, s: usize) -> &[Complex64] {
    let r = m.nrows();
    &m.as_slice()[s * r..(s + 1) * r]
}

/// Component (l1; l2 s2, l3 s3)[m] = sum_k conj(rho_hat^{l1}_{k,m}) c_k with
/// c = cg_project(x^{l2}[s2], x^{l3}[s3], l1).
pub fn population_second_moment(rho: &Distribution, x: &Signal) -> Result<SecondMoment> {
    check_pair(rho, x)?;
    let l_max = x.l_max();
    let r = x.shells();
    let cg = cg_table(l_max);
    let mut out = SecondMoment::zeros(l_max, r, SampleCount::Population);
    let mut c = vec![Complex64::new(0.0, 0.0); 2 * l_max + 1];
    for (l1, l2, l3) in admissible_triples(l_max) {
        let w = 2 * l1 + 1;
        let rh = rho.band(l1);
        let comp = out.component_mut((l1, l2, l3));
        for s2 in 0..r {
            for s3 in 0..r {
                cg.project_into(column(x.band(l2), s2), column(x.band(l3), s3), l1, &mut c[..w]);
                for m in 0..w {
                    let v: Complex64 = (0..w).map(|k| rh[(k, m)].conj() * c[k]).sum();
                    comp[(m * r + s2) * r + s3] = v;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonics::clebsch_gordan;
    use crate::model::{random_distribution, random_signal};

    #[test]
    fn uniform_first_moment_keeps_band_zero_only() {
        let x = random_signal(3, 2, 1, false).unwrap();
        let m = population_first_moment(&Distribution::uniform(3), &x).unwrap();
        assert_eq!(m.band(0), x.band(0));
        for l in 1..=3 {
            assert_eq!(m.band(l).norm(), 0.0);
        }
    }

    #[test]
    fn delta_first_moment_is_signal() {
        let x = random_signal(3, 2, 1, false).unwrap();
        let m = population_first_moment(&Distribution::identity(3), &x).unwrap();
        assert_eq!(m.as_signal(), &x);
    }

    #[test]
    fn uniform_second_moment_only_trivial_component() {
        let x = random_signal(3, 2, 2, false).unwrap();
        let m = population_second_moment(&Distribution::uniform(3), &x).unwrap();
        for (&(l1, _, _), c) in m.iter() {
            if l1 > 0 {
                assert!(c.iter().all(|z| z.norm() == 0.0));
            }
        }
        // (0; l, l)[0, s, s'] = sum_m <l m l -m|0 0> x_m[s] x_{-m}[s']
        for l in 0..=3usize {
            let j = l as i64;
            for s in 0..2 {
                for t in 0..2 {
                    let want: Complex64 = (-j..=j)
                        .map(|mm| {
                            let cg = (-1f64).powi((j - mm) as i32) / ((2 * l + 1) as f64).sqrt();
                            assert!((cg - clebsch_gordan(j, mm, j, -mm, 0, 0)).abs() < 1e-15);
                            x.band(l)[((mm + j) as usize, s)] * x.band(l)[((j - mm) as usize, t)] * cg
                        })
                        .sum();
                    assert!((m.entry(0, l, l, 0, s, t) - want).norm() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn single_band_signal_is_sparse() {
        let mut x = Signal::zeros(3, 2);
        x.set_band(1, random_signal(1, 2, 5, false).unwrap().band(1).clone()).unwrap();
        let m = population_second_moment(&random_distribution(3, 1, false), &x).unwrap();
        for (&(_, l2, l3), c) in m.iter() {
            if l2 != 1 || l3 != 1 {
                assert!(c.iter().all(|z| z.norm() == 0.0), "({l2},{l3})");
            }
        }
        assert!(m.component_norm(2, 1, 1) > 0.0);
    }

    #[test]
    fn swap_symmetry_on_population() {
        let x = random_signal(4, 3, 3, false).unwrap();
        let m = population_second_moment(&random_distribution(4, 2, false), &x).unwrap();
        assert!(m.swap_symmetry_defect() < 1e-12);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let x = random_signal(3, 2, 1, false).unwrap();
        assert!(population_first_moment(&Distribution::uniform(2), &x).is_err());
    }

    #[test]
    fn triples_obey_triangle_rule() {
        let t = admissible_triples(2);
        assert!(t.contains(&(0, 1, 1)) && t.contains(&(2, 1, 1)) && !t.contains(&(2, 0, 1)));
    }
}
