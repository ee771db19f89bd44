use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{
    check_batch, check_lr, check_normalized, default_network, FitOutcome, SCRATCH_OPTIMIZER,
};
use crate::nn::{backward, init_siren, OptimizerKind, OptimizerState, Real, Schema};
use crate::rng::{self, STREAM_SAMPLING};
use crate::volume::{sample_batch, Volume};
use crate::{MlpParameters, Result};

/// Training one network from a random initialization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScratchConfig {
    pub steps: usize,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub network: Schema,
}

impl Default for ScratchConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            optimizer: SCRATCH_OPTIMIZER,
            lr: 1e-4,
            batch_size: 50_000,
            seed: 0,
            network: default_network(),
        }
    }
}

/// Random SIREN initialization followed by `steps` optimizer steps on
/// batches drawn with replacement.
pub fn train_scratch<T: Real>(volume: &Volume, config: &ScratchConfig) -> Result<FitOutcome<T>> {
    train_scratch_until(volume, config, |_, _| false)
}

/// Like [`train_scratch`], but calls `stop(step, params)` after every step and
/// ends early once it returns true. Time spent inside `stop` is not counted in
/// the reported seconds.
pub fn train_scratch_until<T: Real, F>(
    volume: &Volume,
    config: &ScratchConfig,
    mut stop: F,
) -> Result<FitOutcome<T>>
where
    F: FnMut(usize, &MlpParameters<T>) -> bool,
{
    if config.steps == 0 {
        return Err(crate::Error::InvalidArgument(
            "scratch training needs ≥ 1 step".into(),
        ));
    }
    check_lr("scratch learning rate", config.lr)?;
    check_batch(config.batch_size)?;
    check_normalized(volume)?;
    let mut seconds = 0.0;
    let mut params = init_siren::<T>(&config.network, config.seed);
    let mut optimizer = OptimizerState::new(config.optimizer, config.lr, params.len());
    let mut rng = rng::derive(config.seed, &[STREAM_SAMPLING]);
    let mut loss_trace = Vec::with_capacity(config.steps);
    for step in 1..=config.steps {
        let start = Instant::now();
        let (x, y) = sample_batch(volume, config.batch_size, &mut rng)?.to_real::<T>();
        let (loss, grad) = backward(&params, &x, &y)?;
        optimizer.step(&mut params, &grad)?;
        loss_trace.push(loss);
        seconds += start.elapsed().as_secs_f64();
        if stop(step, &params) {
            break;
        }
    }
    let final_train_mse = *loss_trace.last().expect("at least one step");
    Ok(FitOutcome {
        params,
        seconds,
        steps: loss_trace.len(),
        loss_trace,
        final_train_mse,
    })
}
