//! Minimal differentiable substrate: dense tensors, parameter storage with
//! Adam state, GCN/affine layers with hand-derived backward passes, and the
//! checkpoint container.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod params;
pub mod tensor;

pub use adam::{adam_step, AdamConfig};
pub use checkpoint::Checkpoint;
pub use layers::{dropout_mask, gcn_forward, Activation, LayerKind, LayerSpec};
pub use params::{Gradients, Param, ParamStore};
pub use tensor::Matrix;
