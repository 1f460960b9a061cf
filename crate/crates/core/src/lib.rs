//! Genetic kernel-size search for multi-column convolutional networks.
//!
//! The crate evolves the per-layer kernel sizes of a multi-column CNN with a
//! generational genetic algorithm. Fitness is validation accuracy, computed by
//! a self-contained dense-tensor training engine (no external ML framework):
//! convolution, max-pooling, batch normalization, ReLU, fully-connected,
//! dropout and softmax cross-entropy, trained with RMSProp.
//!
//! Modules map onto the pipeline stages:
//! - [`genome`]: kernel-size genomes and their decoding into architectures
//! - [`ga`]: the generational search loop with fitness caching and checkpoints
//! - [`nn`]: tensor type, layer forward/backward passes, shape inference
//! - [`optim`]: RMSProp with geometric learning-rate decay
//! - [`model`]: the assembled multi-column network
//! - [`data`]: IDX/image-directory loading, preprocessing, splits, batching
//! - [`trainer`]: per-genome training and the fitness function
//!
//! Run configuration (TOML file + command-line overrides) and the `kernelga`
//! binary live in the companion CLI crate.

pub mod data;
pub mod error;
pub mod ga;
pub mod genome;
pub mod model;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod trainer;
pub mod testsupport;

pub use error::{Error, Result};
