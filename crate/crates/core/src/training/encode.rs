use std::time::Instant;

use rayon::prelude::*;

use super::{finetune_volume, FinetuneConfig, FitOutcome};
use crate::nn::Real;
use crate::volume::{Volume, VolumeSource};
use crate::{Error, MlpParameters, Result};

/// One encoded member.
#[derive(Clone, Debug)]
pub struct AdaptedModel<T> {
    pub member_index: usize,
    pub params: MlpParameters<T>,
    /// Original `(min, max)` of the member, for denormalizing decoded values.
    pub value_range: (f64, f64),
    pub encode_seconds: f64,
    pub final_train_mse: f64,
}

/// Adapted networks for a sequence, ordered by member index.
#[derive(Clone, Debug)]
pub struct AdaptedModelSet<T> {
    pub dataset: String,
    pub models: Vec<AdaptedModel<T>>,
}

impl<T: Real> AdaptedModelSet<T> {
    pub fn new(dataset: impl Into<String>, mut models: Vec<AdaptedModel<T>>) -> Result<Self> {
        models.sort_by_key(|m| m.member_index);
        if let Some(first) = models.first() {
            if models
                .iter()
                .any(|m| m.params.schema() != first.params.schema())
            {
                return Err(Error::Schema(
                    "adapted models do not share one schema".into(),
                ));
            }
        }
        Ok(Self {
            dataset: dataset.into(),
            models,
        })
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }
}

#[derive(Debug)]
pub struct EncodeReport<T> {
    pub models: AdaptedModelSet<T>,
    /// Members that failed, with their errors; the rest were still encoded.
    pub failures: Vec<(usize, Error)>,
    pub wall_seconds: f64,
}

/// Encodes the listed members with `fit`, each independently and possibly in
/// parallel. Per-member time covers loading, normalization and fitting.
pub fn encode_members<T, S, F>(source: &S, members: &[usize], fit: F) -> EncodeReport<T>
where
    T: Real,
    S: VolumeSource + ?Sized,
    F: Fn(&Volume) -> Result<FitOutcome<T>> + Sync,
{
    let start = Instant::now();
    let results: Vec<(usize, Result<AdaptedModel<T>>)> = members
        .par_iter()
        .map(|&index| {
            let member_start = Instant::now();
            let outcome = source.load(index).and_then(|raw| {
                let volume = raw.normalize();
                let fitted = fit(&volume)?;
                Ok(AdaptedModel {
                    member_index: index,
                    params: fitted.params,
                    value_range: volume.value_range(),
                    encode_seconds: member_start.elapsed().as_secs_f64(),
                    final_train_mse: fitted.final_train_mse,
                })
            });
            (index, outcome)
        })
        .collect();

    let mut models = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (index, result) in results {
        match result {
            Ok(model) => models.push(model),
            Err(e) => {
                log::warn!("member {index} failed: {e}");
                failures.push((index, e));
            }
        }
    }
    EncodeReport {
        models: AdaptedModelSet::new(source.name(), models)
            .expect("all members start from one schema"),
        failures,
        wall_seconds: start.elapsed().as_secs_f64(),
    }
}

/// Finetunes `init` independently on every member of `source`.
pub fn encode_dataset<T: Real, S: VolumeSource + ?Sized>(
    source: &S,
    init: &MlpParameters<T>,
    config: &FinetuneConfig,
) -> EncodeReport<T> {
    let members: Vec<usize> = (0..source.count()).collect();
    encode_members(source, &members, |volume| {
        finetune_volume(init, volume, config)
    })
}
