//! SO(3) representation kernel: Euler-angle rotations, Clebsch-Gordan coefficients, Wigner
//! matrices and the rotation action on coefficient vectors.
//!
//! D^l(g)_{m,m'} = e^{-i m alpha} d^l_{m,m'}(beta) e^{-i m' gamma}, indices m ascending from -l.

mod cg;
mod rotation;
mod wigner;

pub use cg::{cg_project, cg_table, clebsch_gordan, CgTable};
pub use rotation::{mat_mul, Mat3, Rotation};
pub use wigner::{wigner_d, wigner_small_d, wigner_table, WignerTable};


use crate::model::Signal;

/// Applies g to every band: X_l -> D^l(g) X_l.
pub fn rotate_signal(x: &Signal, g: &Rotation) -> Signal {
    x.rotated(g)
}
