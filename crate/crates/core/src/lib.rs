//! Meta-learned initializations for sine-activated coordinate networks.
//!
//! A small MLP `Φ: ℝ³ → ℝ` is meta-pretrained (first-order, Reptile style) on a
//! sparse spatiotemporal subsample of a volume sequence, then finetuned on each
//! full-resolution member. The crate covers the whole pipeline:
//!
//! - [`nn`]: sine MLP with exact backpropagation and first-order optimizers.
//! - [`volume`]: raw volume I/O, normalization, subsampling and batch sampling.
//! - [`training`]: meta-pretraining, volume-specific finetuning and baselines.
//! - [`metrics`]: decoding, PSNR, marching cubes and Chamfer distance.
//! - [`analysis`]: parameter-space projection (PCA, exact t-SNE) and
//!   representative member selection.

pub mod analysis;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod synthetic;
pub mod training;
pub mod volume;

pub use error::{Error, Result};
pub use nn::{GradientVector, LayerSchema, MlpParameters, Real, Schema};
pub use volume::{CoordBatch, Dataset, DatasetDescriptor, Volume, VolumeSource};
