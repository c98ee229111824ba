//! Latent diffusion: schedules, ε-prediction denoisers, score-matching
//! training and reverse samplers.
//!
//! Models operate on standardised latents; [`DiffusionModel`] carries the
//! standardisation so callers can map back to raw embedding coordinates.

pub mod denoiser;
pub mod model;
pub mod sampler;
pub mod schedule;
pub mod train;

pub use denoiser::{time_embedding, Denoiser, DenoiserConfig};
pub use model::{Conditioned, DiffusionModel, EpsPredictor, FnEps, Standardizer, Unconditional, ZeroEps};
pub use sampler::{reverse_sample, sigma_grid, SampleMode, SamplerConfig};
pub use schedule::{forward_noise, forward_noise_with, Kernel, NoiseSchedule, SIGMA_CAP};
pub use train::{
    dm_loss, eps_loss_and_gradients, one_shot_denoise, score_matching_loss, train_dm, train_dm_with_common, DmConfig, NoisyBatch,
    TrainedDm,
};
