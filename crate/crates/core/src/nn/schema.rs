use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Frequency scale of sine activations unless configured otherwise.
pub const DEFAULT_OMEGA: f64 = 30.0;

/// One affine layer, optionally followed by `sin(omega · z)`.
///
/// On the affine output layer `omega` only sets the initialization bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSchema {
    pub in_dim: usize,
    pub out_dim: usize,
    pub has_sine: bool,
    pub omega: f64,
}

impl LayerSchema {
    pub fn param_count(&self) -> usize {
        self.in_dim * self.out_dim + self.out_dim
    }
}

/// Validated layer stack of a sine MLP.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<LayerSchema>", into = "Vec<LayerSchema>")]
pub struct Schema {
    layers: Vec<LayerSchema>,
}

impl Schema {
    pub fn new(layers: Vec<LayerSchema>) -> Result<Self> {
        let Some(last) = layers.last() else {
            return Err(Error::Schema("no layers".into()));
        };
        if last.has_sine {
            return Err(Error::Schema("final layer must be affine".into()));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.in_dim == 0 || layer.out_dim == 0 {
                return Err(Error::Schema(format!("layer {i} has a zero dimension")));
            }
            if !(layer.omega.is_finite() && layer.omega > 0.0) {
                return Err(Error::Schema(format!("layer {i} omega must be positive")));
            }
            if i > 0 && layers[i - 1].out_dim != layer.in_dim {
                return Err(Error::Schema(format!(
                    "layer {i} expects {} inputs but layer {} produces {}",
                    layer.in_dim,
                    i - 1,
                    layers[i - 1].out_dim
                )));
            }
        }
        Ok(Self { layers })
    }

    /// `depth` linear layers: `in_dim → hidden`, `depth − 2` times
    /// `hidden → hidden`, then an affine `hidden → out_dim`.
    pub fn siren(
        in_dim: usize,
        hidden: usize,
        depth: usize,
        out_dim: usize,
        omega_first: f64,
        omega_hidden: f64,
    ) -> Result<Self> {
        if depth < 2 {
            return Err(Error::Schema(format!("depth {depth} < 2")));
        }
        let mut layers = Vec::with_capacity(depth);
        layers.push(LayerSchema {
            in_dim,
            out_dim: hidden,
            has_sine: true,
            omega: omega_first,
        });
        for _ in 0..depth - 2 {
            layers.push(LayerSchema {
                in_dim: hidden,
                out_dim: hidden,
                has_sine: true,
                omega: omega_hidden,
            });
        }
        layers.push(LayerSchema {
            in_dim: hidden,
            out_dim,
            has_sine: false,
            omega: omega_hidden,
        });
        Self::new(layers)
    }

    /// Coordinate network `ℝ³ → ℝ` with the given hidden width and depth.
    pub fn coordinate_net(hidden: usize, depth: usize) -> Result<Self> {
        Self::siren(3, hidden, depth, 1, DEFAULT_OMEGA, DEFAULT_OMEGA)
    }

    pub fn layers(&self) -> &[LayerSchema] {
        &self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn max_width(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.in_dim.max(l.out_dim))
            .max()
            .unwrap_or(0)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerSchema::param_count).sum()
    }

    /// Start offset of each layer's block in the flat parameter vector.
    pub fn offsets(&self) -> Vec<usize> {
        self.layers
            .iter()
            .scan(0, |acc, l| {
                let start = *acc;
                *acc += l.param_count();
                Some(start)
            })
            .collect()
    }
}

/// Seven linear layers of width 256 with ω₀ = 30.
impl Default for Schema {
    fn default() -> Self {
        Self::coordinate_net(256, 7).expect("default schema is valid")
    }
}

impl TryFrom<Vec<LayerSchema>> for Schema {
    type Error = Error;

    fn try_from(layers: Vec<LayerSchema>) -> Result<Self> {
        Self::new(layers)
    }
}

impl From<Schema> for Vec<LayerSchema> {
    fn from(schema: Schema) -> Self {
        schema.layers
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_schema_parameter_count() {
        let schema = Schema::default();
        assert_eq!(schema.layers().len(), 7);
        assert_eq!(
            schema.param_count(),
            (3 * 256 + 256) + 5 * (256 * 256 + 256) + (256 + 1)
        );
        assert_eq!(schema.param_count(), 330_241);
    }

    #[test]
    fn rejects_bad_layouts() {
        let sine = |i, o| LayerSchema {
            in_dim: i,
            out_dim: o,
            has_sine: true,
            omega: 30.0,
        };
        let affine = |i, o| LayerSchema {
            has_sine: false,
            ..sine(i, o)
        };
        assert!(Schema::new(vec![]).is_err());
        assert!(Schema::new(vec![sine(3, 4)]).is_err());
        assert!(Schema::new(vec![sine(3, 0), affine(0, 1)]).is_err());
        assert!(Schema::new(vec![sine(3, 4), affine(5, 1)]).is_err());
        assert!(Schema::new(vec![sine(3, 4), affine(4, 1)]).is_ok());
        assert!(Schema::coordinate_net(0, 3).is_err());
    }

    proptest! {
        #[test]
        fn param_count_matches_layer_sum(
            in_dim in 1usize..6, hidden in 1usize..40, depth in 2usize..8, out in 1usize..3,
        ) {
            let schema = Schema::siren(in_dim, hidden, depth, out, 30.0, 30.0).unwrap();
            let expected = (in_dim * hidden + hidden)
                + (depth - 2) * (hidden * hidden + hidden)
                + (hidden * out + out);
            prop_assert_eq!(schema.param_count(), expected);
            let offsets = schema.offsets();
            prop_assert_eq!(offsets[0], 0);
            prop_assert_eq!(offsets.len(), depth);
        }
    }
}
