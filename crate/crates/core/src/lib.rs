//! Federated-learning simulator for semi-targeted model poisoning.
//!
//! The crate is organised bottom-up:
//!
//! * [`nn`]: a small CNN/MLP engine with exact backpropagation and Adam.
//! * [`data`]: IDX / CIFAR-10 loaders, Gaussian blobs, IID sharding and label flipping.
//! * [`federation`]: FedAvg rounds, client selection, convergence detection.
//! * [`attacks`]: label flipping, train-and-scale, and the attacking-distance-aware
//!   attack with feature-space (full knowledge) or last-layer-gradient (partial
//!   knowledge) target selection.
//! * [`defense`]: norm-difference clipping.
//! * [`metrics`]: MTA, ts-ATA, max-ATA and a PCA view of latent features.
//! * [`harness`]: configuration, presets, CSV output and run comparison.

pub mod attacks;
pub mod data;
pub mod defense;
pub mod error;
pub mod federation;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod rng;

pub use error::{Error, Result};
