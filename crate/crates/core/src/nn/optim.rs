use serde::{Deserialize, Serialize};

use super::{GradientVector, MlpParameters, Real};
use crate::{Error, Result};

/// Plain gradient step `θ − α·g`.
pub fn sgd_step<T: Real>(
    params: &MlpParameters<T>,
    grad: &GradientVector<T>,
    lr: f64,
) -> Result<MlpParameters<T>> {
    let mut next = params.clone();
    sgd_update(&mut next, grad, lr)?;
    Ok(next)
}

/// In-place form of [`sgd_step`].
pub fn sgd_update<T: Real>(
    params: &mut MlpParameters<T>,
    grad: &GradientVector<T>,
    lr: f64,
) -> Result<()> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "learning rate {lr} must be positive"
        )));
    }
    Error::check_len(params.len(), grad.len())?;
    let lr = T::of(lr);
    for (p, g) in params.as_mut_slice().iter_mut().zip(grad.as_slice()) {
        *p = *p - lr * *g;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Optimizer plus whatever running state it carries between steps.
#[derive(Clone, Debug, PartialEq)]
pub enum OptimizerState<T> {
    Sgd {
        lr: f64,
        step_count: u64,
    },
    Adam {
        config: AdamConfig,
        step_count: u64,
        first_moment: Vec<T>,
        second_moment: Vec<T>,
    },
}

impl<T: Real> OptimizerState<T> {
    pub fn sgd(lr: f64) -> Self {
        Self::Sgd { lr, step_count: 0 }
    }

    pub fn adam(config: AdamConfig, len: usize) -> Self {
        Self::Adam {
            config,
            step_count: 0,
            first_moment: vec![T::zero(); len],
            second_moment: vec![T::zero(); len],
        }
    }

    pub fn new(kind: OptimizerKind, lr: f64, len: usize) -> Self {
        match kind {
            OptimizerKind::Sgd => Self::sgd(lr),
            OptimizerKind::Adam => Self::adam(
                AdamConfig {
                    lr,
                    ..AdamConfig::default()
                },
                len,
            ),
        }
    }

    pub fn step_count(&self) -> u64 {
        match self {
            Self::Sgd { step_count, .. } | Self::Adam { step_count, .. } => *step_count,
        }
    }

    /// Applies one update to `params` in place.
    pub fn step(&mut self, params: &mut MlpParameters<T>, grad: &GradientVector<T>) -> Result<()> {
        match self {
            Self::Sgd { lr, step_count } => {
                sgd_update(params, grad, *lr)?;
                *step_count += 1;
            }
            Self::Adam {
                config,
                step_count,
                first_moment,
                second_moment,
            } => {
                Error::check_len(params.len(), grad.len())?;
                Error::check_len(params.len(), first_moment.len())?;
                Error::check_len(params.len(), second_moment.len())?;
                *step_count += 1;
                let t = *step_count as i32;
                let b1 = T::of(config.beta1);
                let b2 = T::of(config.beta2);
                let one = T::one();
                let c1 = one - b1.powi(t);
                let c2 = one - b2.powi(t);
                let lr = T::of(config.lr);
                let eps = T::of(config.eps);
                let moments = first_moment.iter_mut().zip(second_moment.iter_mut());
                for ((p, g), (m, v)) in params
                    .as_mut_slice()
                    .iter_mut()
                    .zip(grad.as_slice())
                    .zip(moments)
                {
                    *m = b1 * *m + (one - b1) * *g;
                    *v = b2 * *v + (one - b2) * *g * *g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
        Ok(())
    }
}

/// Bias-corrected Adam update, value in / value out.
pub fn adam_step<T: Real>(
    mut state: OptimizerState<T>,
    mut params: MlpParameters<T>,
    grad: &GradientVector<T>,
) -> Result<(OptimizerState<T>, MlpParameters<T>)> {
    if !matches!(state, OptimizerState::Adam { .. }) {
        return Err(Error::InvalidArgument(
            "adam_step needs an Adam state".into(),
        ));
    }
    state.step(&mut params, grad)?;
    Ok((state, params))
}
