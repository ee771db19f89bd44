use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_batch, check_lr, default_network, PretrainOutcome};
use crate::nn::{backward, init_siren, sgd_update, Real, Schema};
use crate::rng::{self, Rng, STREAM_META, STREAM_SAMPLING};
use crate::volume::{retained_fraction, sample_batch, subsample_dataset, Volume, VolumeSource};
use crate::{Error, MlpParameters, Result};

/// Meta-pretraining settings. Defaults: λ_s = 4, λ_t = 2, α = β = 1e-4,
/// K = 16, 500 outer steps, 50 000 samples per batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetaConfig {
    /// λ_s: keep every n-th voxel per axis.
    pub spatial_stride: usize,
    /// λ_t: keep every n-th member.
    pub temporal_stride: usize,
    /// α: inner-loop SGD rate.
    pub inner_lr: f64,
    /// β: outer (meta) rate. Zero freezes the meta-model.
    pub outer_lr: f64,
    /// K: inner SGD steps per member and outer step.
    pub inner_steps: usize,
    pub outer_steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub network: Schema,
}

impl Default for MetaConfig {
    fn default() -> Self {
        Self {
            spatial_stride: 4,
            temporal_stride: 2,
            inner_lr: 1e-4,
            outer_lr: 1e-4,
            inner_steps: 16,
            outer_steps: 500,
            batch_size: 50_000,
            seed: 0,
            network: default_network(),
        }
    }
}

impl MetaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.spatial_stride == 0 || self.temporal_stride == 0 {
            return Err(Error::InvalidArgument(
                "subsampling intervals must be ≥ 1".into(),
            ));
        }
        check_lr("inner learning rate", self.inner_lr)?;
        if !(self.outer_lr >= 0.0 && self.outer_lr.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "outer learning rate must be non-negative, got {}",
                self.outer_lr
            )));
        }
        check_batch(self.batch_size)
    }
}

/// Stream used by the inner loop of `member` (position in the subsample)
/// during outer step `outer`.
pub fn meta_rng(seed: u64, outer: usize, member: usize) -> Rng {
    rng::derive(seed, &[STREAM_META, outer as u64, member as u64])
}

fn adapt_traced<T: Real>(
    theta: &MlpParameters<T>,
    volume: &Volume,
    steps: usize,
    lr: f64,
    batch_size: usize,
    rng: &mut Rng,
) -> Result<(MlpParameters<T>, Vec<f64>)> {
    let mut adapted = theta.clone();
    let mut losses = Vec::with_capacity(steps);
    for _ in 0..steps {
        let (x, y) = sample_batch(volume, batch_size, rng)?.to_real::<T>();
        let (loss, grad) = backward(&adapted, &x, &y)?;
        sgd_update(&mut adapted, &grad, lr)?;
        losses.push(loss);
    }
    Ok((adapted, losses))
}

/// `K` SGD steps from a clone of `theta`, each on a freshly drawn batch.
pub fn inner_adapt<T: Real>(
    theta: &MlpParameters<T>,
    volume: &Volume,
    steps: usize,
    lr: f64,
    batch_size: usize,
    rng: &mut Rng,
) -> Result<MlpParameters<T>> {
    adapt_traced(theta, volume, steps, lr, batch_size, rng).map(|(p, _)| p)
}

/// One Reptile update over `members` (`(volume, member index)` pairs):
/// `θ_m ← θ_m − β · Σ(θ_m − θ'_i) / T'`.
///
/// Inner loops may run in parallel; the sum is folded in member order.
/// Returns the new parameters and the mean first-step inner loss.
pub fn meta_outer_step<T: Real>(
    theta: &MlpParameters<T>,
    members: &[(Volume, usize)],
    config: &MetaConfig,
    outer: usize,
) -> Result<(MlpParameters<T>, f64)> {
    if members.is_empty() {
        return Err(Error::Empty("meta-training set"));
    }
    let adapted: Vec<Result<(MlpParameters<T>, Vec<f64>)>> = members
        .par_iter()
        .enumerate()
        .map(|(position, (volume, index))| {
            let mut rng = meta_rng(config.seed, outer, position);
            adapt_traced(
                theta,
                volume,
                config.inner_steps,
                config.inner_lr,
                config.batch_size,
                &mut rng,
            )
            .map_err(|e| Error::member(*index, e))
        })
        .collect();

    let mut accumulated = vec![T::zero(); theta.len()];
    let mut first_losses = 0.0;
    for result in adapted {
        let (clone, losses) = result?;
        for ((acc, base), moved) in accumulated
            .iter_mut()
            .zip(theta.as_slice())
            .zip(clone.as_slice())
        {
            *acc = *acc + (*base - *moved);
        }
        first_losses += losses.first().copied().unwrap_or(f64::NAN);
    }

    let count = T::of(members.len() as f64);
    let beta = T::of(config.outer_lr);
    let mut next = theta.clone();
    for (p, acc) in next.as_mut_slice().iter_mut().zip(&accumulated) {
        *p = *p - beta * (*acc / count);
    }
    Ok((next, first_losses / members.len() as f64))
}

/// Meta-pretrains an initialization on the strided subsample of `source`.
pub fn meta_pretrain<T: Real, S: VolumeSource + ?Sized>(
    source: &S,
    config: &MetaConfig,
) -> Result<PretrainOutcome<T>> {
    config.validate()?;
    let members = subsample_dataset(source, config.spatial_stride, config.temporal_stride)?;
    let fraction = retained_fraction(
        source.dims(),
        source.count(),
        config.spatial_stride,
        config.temporal_stride,
    );
    log::info!(
        "meta-pretraining on {} of {} members, {:.4}% of samples",
        members.len(),
        source.count(),
        fraction * 100.0
    );

    let mut theta = init_siren::<T>(&config.network, config.seed);
    let mut loss_trace = Vec::with_capacity(config.outer_steps);
    for outer in 0..config.outer_steps {
        let (next, loss) = meta_outer_step(&theta, &members, config, outer)?;
        theta = next;
        loss_trace.push(loss);
        if (outer + 1) % 50 == 0 || outer + 1 == config.outer_steps {
            log::debug!(
                "outer step {}/{}: inner loss {loss:.6}",
                outer + 1,
                config.outer_steps
            );
        }
    }
    Ok(PretrainOutcome {
        params: theta,
        member_count: members.len(),
        retained_fraction: fraction,
        loss_trace,
    })
}

/// Joint pretraining on the same subsample with no inner loop: one SGD step
/// at rate α per sampled batch, cycling through members, for
/// `outer_steps · T' · K` steps so both pretrainers see the same number of
/// samples.
pub fn pretrain_vanilla<T: Real, S: VolumeSource + ?Sized>(
    source: &S,
    config: &MetaConfig,
) -> Result<PretrainOutcome<T>> {
    config.validate()?;
    let members = subsample_dataset(source, config.spatial_stride, config.temporal_stride)?;
    let fraction = retained_fraction(
        source.dims(),
        source.count(),
        config.spatial_stride,
        config.temporal_stride,
    );
    let per_outer = members.len() * config.inner_steps;
    let total = config.outer_steps * per_outer;

    let mut theta = init_siren::<T>(&config.network, config.seed);
    let mut rng = rng::derive(config.seed, &[STREAM_SAMPLING]);
    let mut loss_trace = Vec::with_capacity(config.outer_steps);
    let mut window = 0.0;
    for step in 0..total {
        let (volume, index) = &members[step % members.len()];
        let (x, y) = sample_batch(volume, config.batch_size, &mut rng)?.to_real::<T>();
        let (loss, grad) = backward(&theta, &x, &y).map_err(|e| Error::member(*index, e))?;
        sgd_update(&mut theta, &grad, config.inner_lr)?;
        window += loss;
        if (step + 1) % per_outer == 0 {
            loss_trace.push(window / per_outer as f64);
            window = 0.0;
        }
    }
    Ok(PretrainOutcome {
        params: theta,
        member_count: members.len(),
        retained_fraction: fraction,
        loss_trace,
    })
}
