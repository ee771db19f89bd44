//! Single-network checkpoint files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "MINR"  u16 version  u8 precision (0 = f32, 1 = f64)  u32 layer count
//! per layer: u32 in_dim  u32 out_dim  u8 sine  f64 omega
//! f64 range min  f64 range max  u64 parameter count
//! parameters (4 or 8 bytes each)
//! u32 CRC32 of every preceding byte
//! ```

use std::path::Path;

use meta_inr::nn::{LayerSchema, Precision, Real, Schema};
use meta_inr::{Error, MlpParameters, Result};

const MAGIC: &[u8; 4] = b"MINR";
const VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum StoredParams {
    Single(MlpParameters<f32>),
    Double(MlpParameters<f64>),
}

/// A network plus the value range its outputs denormalize to.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: StoredParams,
    pub value_range: (f64, f64),
}

impl Checkpoint {
    pub fn new<T: Real>(params: &MlpParameters<T>, value_range: (f64, f64)) -> Self {
        let params = match T::PRECISION {
            Precision::Single => StoredParams::Single(params.cast()),
            Precision::Double => StoredParams::Double(params.cast()),
        };
        Self {
            params,
            value_range,
        }
    }

    /// Parameters converted to `T` (exact when `T` matches the stored precision).
    pub fn params<T: Real>(&self) -> MlpParameters<T> {
        match &self.params {
            StoredParams::Single(p) => p.cast(),
            StoredParams::Double(p) => p.cast(),
        }
    }

    pub fn schema(&self) -> &Schema {
        match &self.params {
            StoredParams::Single(p) => p.schema(),
            StoredParams::Double(p) => p.schema(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let schema = self.schema();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(match self.params {
            StoredParams::Single(_) => 0,
            StoredParams::Double(_) => 1,
        });
        out.extend_from_slice(&(schema.layers().len() as u32).to_le_bytes());
        for layer in schema.layers() {
            out.extend_from_slice(&(layer.in_dim as u32).to_le_bytes());
            out.extend_from_slice(&(layer.out_dim as u32).to_le_bytes());
            out.push(layer.has_sine as u8);
            out.extend_from_slice(&layer.omega.to_le_bytes());
        }
        out.extend_from_slice(&self.value_range.0.to_le_bytes());
        out.extend_from_slice(&self.value_range.1.to_le_bytes());
        match &self.params {
            StoredParams::Single(p) => {
                out.extend_from_slice(&(p.len() as u64).to_le_bytes());
                p.as_slice()
                    .iter()
                    .for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
            }
            StoredParams::Double(p) => {
                out.extend_from_slice(&(p.len() as u64).to_le_bytes());
                p.as_slice()
                    .iter()
                    .for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    /// Parses checkpoint bytes; `path` only labels errors.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let fail = |reason: &str| Error::Format {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        if bytes.len() < MAGIC.len() + 4 || &bytes[..4] != MAGIC {
            return Err(fail("not a MINR checkpoint"));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        if crc32fast::hash(body) != stored {
            return Err(fail("CRC mismatch"));
        }
        let mut r = Reader {
            bytes: &body[4..],
            fail: &fail,
        };
        let version = u16::from_le_bytes(r.take()?);
        if version != VERSION {
            return Err(fail(&format!("unsupported version {version}")));
        }
        let precision = r.take::<1>()?[0];
        let layer_count = u32::from_le_bytes(r.take()?) as usize;
        let mut layers = Vec::with_capacity(layer_count.min(1024));
        for _ in 0..layer_count {
            layers.push(LayerSchema {
                in_dim: u32::from_le_bytes(r.take()?) as usize,
                out_dim: u32::from_le_bytes(r.take()?) as usize,
                has_sine: r.take::<1>()?[0] != 0,
                omega: f64::from_le_bytes(r.take()?),
            });
        }
        let schema = Schema::new(layers)?;
        let value_range = (f64::from_le_bytes(r.take()?), f64::from_le_bytes(r.take()?));
        let count = u64::from_le_bytes(r.take()?) as usize;
        if count != schema.param_count() {
            return Err(fail(&format!(
                "{count} parameters stored, schema needs {}",
                schema.param_count()
            )));
        }
        let params = match precision {
            0 => {
                let values = (0..count)
                    .map(|_| r.take().map(f32::from_le_bytes))
                    .collect::<Result<_>>()?;
                StoredParams::Single(MlpParameters::unflatten(schema, values)?)
            }
            1 => {
                let values = (0..count)
                    .map(|_| r.take().map(f64::from_le_bytes))
                    .collect::<Result<_>>()?;
                StoredParams::Double(MlpParameters::unflatten(schema, values)?)
            }
            other => return Err(fail(&format!("unknown precision flag {other}"))),
        };
        if !r.bytes.is_empty() {
            return Err(fail("trailing bytes"));
        }
        Ok(Self {
            params,
            value_range,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

struct Reader<'a, F> {
    bytes: &'a [u8],
    fail: &'a F,
}

impl<F: Fn(&str) -> Error> Reader<'_, F> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        if self.bytes.len() < N {
            return Err((self.fail)("truncated"));
        }
        let (head, rest) = self.bytes.split_at(N);
        self.bytes = rest;
        Ok(head.try_into().expect("length checked"))
    }
}
