//! Product quadrature on SO(3) with Haar measure normalized to 1.
//!
//! Trapezoid in alpha and gamma, Gauss-Legendre in cos(beta). With n_alpha = n_gamma = B + 1 and
//! n_beta >= (B + 1) / 2 the rule is exact for every product of Wigner matrix entries whose bands
//! sum to at most B.

use std::f64::consts::TAU;

use gauss_quad::legendre::GaussLegendre;

use crate::error::{Error, Result};
use crate::harmonics::Rotation;

#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    alphas: Vec<f64>,
    gammas: Vec<f64>,
    betas: Vec<f64>,
    beta_weights: Vec<f64>,
}

fn legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    if n == 1 {
        return (vec![0.0], vec![2.0]);
    }
    let rule = GaussLegendre::new(n).expect("degree >= 2");
    rule.as_node_weight_pairs().iter().copied().unzip()
}

impl QuadratureGrid {
    pub fn new(n_alpha: usize, n_beta: usize, n_gamma: usize) -> Result<Self> {
        if n_alpha == 0 || n_beta == 0 || n_gamma == 0 {
            return Err(Error::InvalidArgument(format!(
                "quadrature orders must be positive, got ({n_alpha}, {n_beta}, {n_gamma})"
            )));
        }
        let (x, w) = legendre(n_beta);
        Ok(QuadratureGrid {
            alphas: (0..n_alpha).map(|i| TAU * i as f64 / n_alpha as f64).collect(),
            gammas: (0..n_gamma).map(|i| TAU * i as f64 / n_gamma as f64).collect(),
            betas: x.iter().map(|c| c.clamp(-1.0, 1.0).acos()).collect(),
            beta_weights: w.iter().map(|w| 0.5 * w).collect(),
        })
    }

    /// Smallest grid exact for Wigner products of total band `band`.
    pub fn for_band(band: usize) -> Self {
        Self::new(band + 1, band / 2 + 1, band + 1).expect("positive orders")
    }

    /// The default grid for moment integrals at band limit L.
    pub fn for_moments(l_max: usize) -> Self {
        Self::new(4 * l_max + 4, 2 * l_max + 2, 4 * l_max + 4).expect("positive orders")
    }

    pub fn orders(&self) -> (usize, usize, usize) {
        (self.alphas.len(), self.betas.len(), self.gammas.len())
    }

    /// Largest total band integrated exactly.
    pub fn exact_band(&self) -> usize {
        let (a, b, g) = self.orders();
        (a - 1).min(g - 1).min(2 * b - 1)
    }

    /// The same rule with every order doubled.
    pub fn refined(&self) -> Self {
        let (a, b, g) = self.orders();
        Self::new(2 * a, 2 * b, 2 * g).expect("positive orders")
    }

    pub fn len(&self) -> usize {
        self.alphas.len() * self.betas.len() * self.gammas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Beta nodes with their weights, already including the alpha/gamma trapezoid factors.
    pub fn beta_slices(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let wa = 1.0 / (self.alphas.len() * self.gammas.len()) as f64;
        self.betas.iter().zip(&self.beta_weights).map(move |(&b, &w)| (b, w * wa))
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    pub fn nodes(&self) -> impl Iterator<Item = (Rotation, f64)> + '_ {
        self.beta_slices().flat_map(move |(b, w)| {
            self.alphas
                .iter()
                .flat_map(move |&a| self.gammas.iter().map(move |&g| (Rotation::new(a, b, g), w)))
        })
    }
}
