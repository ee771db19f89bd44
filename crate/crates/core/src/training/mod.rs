//! Two-stage encoding pipeline and its baselines.
//!
//! Meta-pretraining learns an initialization `θ_m` from a strided subsample of
//! a volume sequence with a first-order (Reptile) update: every outer step
//! clones `θ_m` per member, runs `K` SGD steps on fresh random batches, and
//! moves `θ_m` against the average of `θ_m − θ'`. Finetuning then adapts a copy
//! of `θ_m` to each full-resolution member independently.
//!
//! Baselines: training from a random initialization ([`train_scratch`]) and
//! plain joint pretraining on the same subsample with no inner loop
//! ([`pretrain_vanilla`]).

mod encode;
mod finetune;
mod meta;
mod scratch;

use crate::nn::{OptimizerKind, Schema};
use crate::{Error, MlpParameters, Result};

pub use encode::{encode_dataset, encode_members, AdaptedModel, AdaptedModelSet, EncodeReport};
pub use finetune::{finetune_volume, FinetuneConfig, Schedule};
pub use meta::{
    inner_adapt, meta_outer_step, meta_pretrain, meta_rng, pretrain_vanilla, MetaConfig,
};
pub use scratch::{train_scratch, train_scratch_until, ScratchConfig};

/// Result of fitting one network to one volume.
#[derive(Clone, Debug)]
pub struct FitOutcome<T> {
    pub params: MlpParameters<T>,
    pub seconds: f64,
    pub steps: usize,
    /// Batch loss before each update, in step order.
    pub loss_trace: Vec<f64>,
    /// Sample-weighted mean batch loss over the final epoch (or the last step
    /// for step-based schedules).
    pub final_train_mse: f64,
}

/// Result of a pretraining run (meta or vanilla).
#[derive(Clone, Debug)]
pub struct PretrainOutcome<T> {
    pub params: MlpParameters<T>,
    /// Members kept after temporal subsampling (`T'`).
    pub member_count: usize,
    /// Fraction of all voxels the subsample retains.
    pub retained_fraction: f64,
    /// Mean first inner-step loss per outer step.
    pub loss_trace: Vec<f64>,
}

pub(crate) fn check_lr(name: &str, lr: f64) -> Result<()> {
    if lr > 0.0 && lr.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{name} must be positive, got {lr}"
        )))
    }
}

pub(crate) fn check_batch(batch_size: usize) -> Result<()> {
    if batch_size == 0 {
        Err(Error::InvalidArgument("batch size must be ≥ 1".into()))
    } else {
        Ok(())
    }
}

pub(crate) fn check_normalized(volume: &crate::Volume) -> Result<()> {
    if volume.is_normalized() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(
            "training expects a normalized volume".into(),
        ))
    }
}

/// Default optimizer settings for the scratch baseline.
pub const SCRATCH_OPTIMIZER: OptimizerKind = OptimizerKind::Adam;

pub(crate) fn default_network() -> Schema {
    Schema::default()
}
