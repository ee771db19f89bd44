//! Sine-activated MLP: initialization, batched forward pass, exact
//! backpropagation of the mean squared error, and first-order optimizers.
//!
//! Parameters live in one flat vector. Per layer, the weight matrix is stored
//! row-major as `out_dim × in_dim` followed by the `out_dim` biases; layers are
//! concatenated in order. This layout is frozen because checkpoints depend on it.

mod mlp;
mod optim;
mod params;
mod real;
mod schema;

pub use mlp::{backward, forward, forward_coords, mse_loss, CHUNK_ROWS};
pub use optim::{adam_step, sgd_step, sgd_update, AdamConfig, OptimizerKind, OptimizerState};
pub use params::{init_siren, GradientVector, MlpParameters};
pub use real::{Precision, Real};
pub use schema::{LayerSchema, Schema, DEFAULT_OMEGA};
