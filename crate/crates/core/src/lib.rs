//! Graph anomaly detection with guided latent diffusion.
//!
//! The pipeline projects an attributed graph into a latent space with a GCN
//! autoencoder, trains an unconditional and a common-feature-conditioned
//! denoiser on the node embeddings, and scores each node by how badly the
//! autoencoder reconstructs it from a partially noised embedding that was
//! denoised under the guided combination of both models.
//!
//! Module map:
//!
//! - [`graph`]: attributed graphs, file layout, GCN normalisation, outlier injection
//! - [`nn`]: tensors, layers with hand-written backward passes, Adam, checkpoints
//! - [`autoencoder`]: latent projection and reconstruction loss
//! - [`diffusion`]: noise schedules, denoisers, score-matching training, samplers
//! - [`common`]: the adaptive common-feature conditioning vector
//! - [`detector`]: guided detection, component ablations, sweeps
//! - [`metrics`]: ROC-AUC, AP, Recall@k, AUPRC
//! - [`par`]: rayon / sequential row-parallel helpers

pub mod autoencoder;
pub mod common;
pub mod detector;
pub mod diffusion;
pub mod error;
pub mod graph;
pub mod metrics;
pub mod nn;
pub mod par;
pub mod rng;
pub mod sparse;

pub use error::{Error, Result};
