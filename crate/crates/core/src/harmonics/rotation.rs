use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

pub type Mat3 = [[f64; 3]; 3];

/// A rotation in ZYZ Euler angles, g = Rz(alpha) Ry(beta) Rz(gamma).
///
/// Angles are always stored canonically: alpha and gamma in [0, 2pi), beta in [0, pi].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rotation {
    alpha: f64,
    beta: f64,
    gamma: f64,
}

fn wrap_2pi(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    // rem_euclid can round up to exactly 2pi for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

impl Rotation {
    /// Builds the rotation Rz(alpha) Ry(beta) Rz(gamma) from arbitrary real angles.
    ///
    /// A beta outside [0, pi] is folded back using Rz(a) Ry(-b) Rz(c) = Rz(a+pi) Ry(b) Rz(c+pi),
    /// so the stored triple describes the same rotation.
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        let mut a = alpha;
        let mut c = gamma;
        // fold beta into (-pi, pi]
        let mut b = beta.rem_euclid(TAU);
        if b > PI {
            b -= TAU;
        }
        if b < 0.0 {
            b = -b;
            a += PI;
            c += PI;
        }
        Rotation {
            alpha: wrap_2pi(a),
            beta: b.min(PI),
            gamma: wrap_2pi(c),
        }
    }

    pub fn identity() -> Self {
        Rotation {
            alpha: 0.0,
            beta: 0.0,
            gamma: 0.0,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn angles(&self) -> (f64, f64, f64) {
        (self.alpha, self.beta, self.gamma)
    }

    pub fn is_canonical(&self) -> bool {
        (0.0..TAU).contains(&self.alpha) && (0.0..=PI).contains(&self.beta) && (0.0..TAU).contains(&self.gamma)
    }

    /// Active 3x3 rotation matrix, row-major.
    pub fn to_matrix(&self) -> Mat3 {
        let (sa, ca) = self.alpha.sin_cos();
        let (sb, cb) = self.beta.sin_cos();
        let (sg, cg) = self.gamma.sin_cos();
        [
            [ca * cb * cg - sa * sg, -ca * cb * sg - sa * cg, ca * sb],
            [sa * cb * cg + ca * sg, -sa * cb * sg + ca * cg, sa * sb],
            [-sb * cg, sb * sg, cb],
        ]
    }

    /// Recovers canonical ZYZ angles from a proper rotation matrix.
    ///
    /// At the poles (beta = 0 or pi) only alpha +/- gamma is determined; gamma is set to 0.
    pub fn from_matrix(r: &Mat3) -> Self {
        let sb = (r[0][2] * r[0][2] + r[1][2] * r[1][2]).sqrt();
        let beta = sb.atan2(r[2][2]);
        const POLE: f64 = 1e-12;
        if sb < POLE {
            if r[2][2] > 0.0 {
                Rotation::new(r[1][0].atan2(r[0][0]), 0.0, 0.0)
            } else {
                Rotation::new((-r[1][0]).atan2(r[1][1]), PI, 0.0)
            }
        } else {
            let alpha = r[1][2].atan2(r[0][2]);
            let gamma = r[2][1].atan2(-r[2][0]);
            Rotation::new(alpha, beta, gamma)
        }
    }

    /// The rotation `self * other` (apply `other` first).
    pub fn compose(&self, other: &Rotation) -> Rotation {
        Rotation::from_matrix(&mat_mul(&self.to_matrix(), &other.to_matrix()))
    }

    pub fn inverse(&self) -> Rotation {
        Rotation::new(-self.gamma, -self.beta, -self.alpha)
    }
}

impl Default for Rotation {
    fn default() -> Self {
        Rotation::identity()
    }
}

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut c = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}
