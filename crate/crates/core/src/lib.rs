//! Recovery of a band-limited signal on R spherical shells and of the distribution of its random
//! SO(3) rotations from the first two moments of noisy rotated copies.
//!
//! The pipeline is `simulate` (observations) -> `moments` (first and second moments in
//! isotypic components) -> `recover` (frequency marching). `harmonics` holds the representation
//! theory and `model` the data types.

pub mod error;
pub mod experiment;
pub mod harmonics;
pub mod model;
pub mod moments;
pub mod quadrature;
pub mod recover;
mod reduce;
pub mod simulate;

pub use error::{Error, Result};
pub use num_complex::Complex64;
