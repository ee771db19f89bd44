use rand::Rng as _;

use super::{Real, Schema};
use crate::rng::{self, STREAM_INIT};
use crate::{Error, Result};

/// Flat parameter vector of a sine MLP together with its layer schema.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParameters<T> {
    schema: Schema,
    values: Vec<T>,
}

/// Borrowed weights (`out × in`, row-major) and biases of one layer.
#[derive(Clone, Copy, Debug)]
pub struct LayerView<'a, T> {
    pub weights: &'a [T],
    pub bias: &'a [T],
}

impl<T: Real> MlpParameters<T> {
    /// Rebuilds parameters from a flat vector in the documented layer order.
    pub fn unflatten(schema: Schema, values: Vec<T>) -> Result<Self> {
        Error::check_len(schema.param_count(), values.len())?;
        Ok(Self { schema, values })
    }

    pub fn zeros(schema: Schema) -> Self {
        let values = vec![T::zero(); schema.param_count()];
        Self { schema, values }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn flatten(&self) -> Vec<T> {
        self.values.clone()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn layer(&self, index: usize) -> LayerView<'_, T> {
        let layer = &self.schema.layers()[index];
        let start: usize = self.schema.layers()[..index]
            .iter()
            .map(|l| l.param_count())
            .sum();
        let split = start + layer.in_dim * layer.out_dim;
        LayerView {
            weights: &self.values[start..split],
            bias: &self.values[split..split + layer.out_dim],
        }
    }

    pub fn cast<U: Real>(&self) -> MlpParameters<U> {
        MlpParameters {
            schema: self.schema.clone(),
            values: self.values.iter().map(|v| U::of(v.f64())).collect(),
        }
    }

    /// Largest absolute element-wise difference to `other`.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        Error::check_len(self.len(), other.len())?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a.f64() - b.f64()).abs())
            .fold(0.0, f64::max))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// SIREN initialization.
///
/// First-layer weights are uniform in `±1/in_dim`, later layers in
/// `±√(6/in_dim)/ω` with the layer's own ω; biases start at zero. Draws are made
/// in `f64` in flat-vector order so both precisions see the same values.
pub fn init_siren<T: Real>(schema: &Schema, seed: u64) -> MlpParameters<T> {
    let mut rng = rng::derive(seed, &[STREAM_INIT]);
    let mut values = Vec::with_capacity(schema.param_count());
    for (i, layer) in schema.layers().iter().enumerate() {
        let bound = if i == 0 {
            1.0 / layer.in_dim as f64
        } else {
            (6.0 / layer.in_dim as f64).sqrt() / layer.omega
        };
        for _ in 0..layer.in_dim * layer.out_dim {
            let u: f64 = rng.random();
            values.push(T::of((2.0 * u - 1.0) * bound));
        }
        values.extend(std::iter::repeat_n(T::zero(), layer.out_dim));
    }
    MlpParameters {
        schema: schema.clone(),
        values,
    }
}

/// Gradient of a scalar loss, aligned with [`MlpParameters`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientVector<T>(pub Vec<T>);

impl<T: Real> GradientVector<T> {
    pub fn zeros(len: usize) -> Self {
        Self(vec![T::zero(); len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        Error::check_len(self.len(), other.len())?;
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a = *a + *b;
        }
        Ok(())
    }

    pub fn sup_norm(&self) -> f64 {
        self.0.iter().map(|g| g.f64().abs()).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn init_is_deterministic_per_seed() {
        let schema = Schema::coordinate_net(16, 4).unwrap();
        let a = init_siren::<f32>(&schema, 42);
        let b = init_siren::<f32>(&schema, 42);
        let c = init_siren::<f32>(&schema, 43);
        assert_eq!(
            a.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_ne!(a, c);
    }

    #[test]
    fn default_init_has_expected_length() {
        let p = init_siren::<f32>(&Schema::default(), 0);
        assert_eq!(p.len(), 330_241);
        assert_eq!(p.flatten().len(), 330_241);
    }

    #[test]
    fn init_respects_layer_bounds() {
        let schema = Schema::coordinate_net(64, 4).unwrap();
        let p = init_siren::<f64>(&schema, 5);
        for (i, layer) in schema.layers().iter().enumerate() {
            let view = p.layer(i);
            let bound = if i == 0 {
                1.0 / 3.0
            } else {
                (6.0 / 64.0f64).sqrt() / 30.0
            };
            assert!(view.weights.iter().all(|w| w.abs() <= bound));
            assert!(view.bias.iter().all(|b| *b == 0.0));
            assert_eq!(view.weights.len(), layer.in_dim * layer.out_dim);
        }
    }

    #[test]
    fn first_layer_weights_fill_uniform_interval() {
        // 3 → 33_334 gives 100_002 first-layer samples of U(−1/3, 1/3).
        let schema = Schema::siren(3, 33_334, 2, 1, 30.0, 30.0).unwrap();
        let p = init_siren::<f64>(&schema, 11);
        let w = p.layer(0).weights;
        assert!(w.len() >= 100_000);
        let lo = w.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let bound = 1.0 / 3.0;
        assert!(lo >= -bound && hi <= bound);
        // The gap left uncovered at each end has expected width 2b/(n+1); 1 %
        // of the interval is hundreds of standard deviations away.
        assert!(
            (hi - lo) >= 0.99 * 2.0 * bound,
            "coverage {}",
            (hi - lo) / (2.0 * bound)
        );
    }

    #[test]
    fn unflatten_rejects_wrong_length() {
        let schema = Schema::coordinate_net(4, 3).unwrap();
        let err = MlpParameters::<f32>::unflatten(schema.clone(), vec![0.0; 3]).unwrap_err();
        assert!(matches!(err, Error::LengthMismatch { .. }));
        let n = schema.param_count();
        assert!(MlpParameters::<f32>::unflatten(schema, vec![0.0; n]).is_ok());
    }

    proptest! {
        #[test]
        fn flatten_unflatten_round_trip(seed in any::<u64>(), hidden in 1usize..24, depth in 2usize..6) {
            let schema = Schema::coordinate_net(hidden, depth).unwrap();
            let p = init_siren::<f32>(&schema, seed);
            let flat = p.flatten();
            prop_assert_eq!(&flat, &p.flatten());
            let q = MlpParameters::unflatten(schema, flat).unwrap();
            prop_assert_eq!(
                p.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                q.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
    }
}
