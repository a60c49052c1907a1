//! Minimal neural-network engine: forward pass, cross-entropy, exact
//! backpropagation, Adam, latent feature extraction and last-layer gradient
//! probes.

mod adam;
mod layers;
mod model;
mod params;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use model::{
    cross_entropy, LastLayerGradient, LastLayerProbe, LayerSpec, ModelState, Reduction,
};
pub use params::{norm_diff, GradientSet, ParameterVector};
pub use tensor::Tensor;
