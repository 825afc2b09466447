//! Rotation samplers, the noisy observation model y = g.x + e, and Monte-Carlo estimates of the
//! distribution's Fourier matrices.

mod observe;
mod sampler;

pub use observe::{
    generate_observations, load_observations, observations_from_json, observations_to_json, save_observations,
    sigma_for_snr, Layout, NoiseModel, ObservationSet, ObservationSource, ObservationStream,
};
pub(crate) use observe::rotate_into;
pub use sampler::{
    derive_seed, estimate_distribution, estimate_rho_hat, estimate_rho_hat_all, index_rng, sample_density,
    sample_gaussian_euler, sample_inplane, sample_restricted, sample_uniform, RotationSample, Sampler, Tilt,
};
