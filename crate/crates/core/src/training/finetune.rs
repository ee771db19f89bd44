use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{check_batch, check_lr, check_normalized, FitOutcome};
use crate::nn::{backward, OptimizerKind, OptimizerState, Real};
use crate::rng::{self, STREAM_FINETUNE};
use crate::volume::{sample_batch, Volume};
use crate::{MlpParameters, Result};

/// How the `k` finetuning iterations are counted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    /// `k` shuffled passes over every voxel, one step per batch.
    #[default]
    Epochs,
    /// `k` steps, each on a batch drawn with replacement.
    Steps,
}

/// Volume-specific finetuning settings. Defaults: plain SGD at rate 1e-5,
/// K = 16 epochs, 50 000 samples per batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FinetuneConfig {
    pub lr: f64,
    pub k: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub schedule: Schedule,
    pub optimizer: OptimizerKind,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            lr: 1e-5,
            k: 16,
            batch_size: 50_000,
            seed: 0,
            schedule: Schedule::Epochs,
            optimizer: OptimizerKind::Sgd,
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        check_lr("finetuning learning rate", self.lr)?;
        check_batch(self.batch_size)
    }

    /// Optimizer steps a run on `voxels` samples will take.
    pub fn step_count(&self, voxels: usize) -> usize {
        match self.schedule {
            Schedule::Epochs => self.k * voxels.div_ceil(self.batch_size),
            Schedule::Steps => self.k,
        }
    }
}

/// Adapts a copy of `init` to one normalized volume using every voxel.
pub fn finetune_volume<T: Real>(
    init: &MlpParameters<T>,
    volume: &Volume,
    config: &FinetuneConfig,
) -> Result<FitOutcome<T>> {
    config.validate()?;
    check_normalized(volume)?;
    let start = Instant::now();
    let mut params = init.clone();
    let mut optimizer = OptimizerState::new(config.optimizer, config.lr, params.len());
    let mut rng = rng::derive(config.seed, &[STREAM_FINETUNE]);
    let mut loss_trace = Vec::with_capacity(config.step_count(volume.len()));
    let mut final_train_mse = f64::NAN;

    match config.schedule {
        Schedule::Epochs => {
            let coords = volume.coords();
            let values = volume.data();
            let mut order: Vec<usize> = (0..volume.len()).collect();
            let mut x = Vec::with_capacity(config.batch_size.min(order.len()) * 3);
            let mut y = Vec::with_capacity(config.batch_size.min(order.len()));
            for _ in 0..config.k {
                order.shuffle(&mut rng);
                let mut epoch_sq = 0.0;
                for batch in order.chunks(config.batch_size) {
                    x.clear();
                    y.clear();
                    for &n in batch {
                        x.extend(coords[n].iter().map(|&c| T::of(c as f64)));
                        y.push(T::of(values[n] as f64));
                    }
                    let (loss, grad) = backward(&params, &x, &y)?;
                    optimizer.step(&mut params, &grad)?;
                    loss_trace.push(loss);
                    epoch_sq += loss * batch.len() as f64;
                }
                final_train_mse = epoch_sq / order.len() as f64;
            }
        }
        Schedule::Steps => {
            for _ in 0..config.k {
                let (x, y) = sample_batch(volume, config.batch_size, &mut rng)?.to_real::<T>();
                let (loss, grad) = backward(&params, &x, &y)?;
                optimizer.step(&mut params, &grad)?;
                loss_trace.push(loss);
                final_train_mse = loss;
            }
        }
    }

    Ok(FitOutcome {
        params,
        seconds: start.elapsed().as_secs_f64(),
        steps: loss_trace.len(),
        loss_trace,
        final_train_mse,
    })
}
