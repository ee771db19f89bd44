//! Dense scalar volumes: raw I/O, normalization, coordinate mapping,
//! spatiotemporal subsampling and random coordinate-value batches.
//!
//! Voxels are stored x-fastest, then y, then z. Grid index `i` on an axis of
//! `n` samples maps to the coordinate `−1 + 2i/(n − 1)` (0 when `n = 1`). A
//! subsampled volume remembers the grid it was cut from, so its voxels keep the
//! coordinates they had at full resolution.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;
use crate::{Error, Result};

pub type Dims = [usize; 3];

pub fn voxel_count(dims: Dims) -> usize {
    dims[0] * dims[1] * dims[2]
}

/// Coordinate of grid index `i` on an axis with `n` samples.
#[inline]
pub fn axis_coord(n: usize, i: usize) -> f64 {
    if n <= 1 {
        0.0
    } else {
        -1.0 + 2.0 * i as f64 / (n - 1) as f64
    }
}

/// Normalized `[−1, 1]³` coordinate of voxel `(i, j, k)` in a grid of `dims`.
pub fn coord_of_index(dims: Dims, index: [usize; 3]) -> Result<[f64; 3]> {
    for axis in 0..3 {
        if index[axis] >= dims[axis] {
            return Err(Error::InvalidArgument(format!(
                "index {index:?} outside grid {dims:?}"
            )));
        }
    }
    Ok(std::array::from_fn(|a| axis_coord(dims[a], index[a])))
}

/// Where a volume's voxels sit on their source grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SampleGrid {
    pub source_dims: Dims,
    pub stride: usize,
}

impl SampleGrid {
    pub fn full(dims: Dims) -> Self {
        Self {
            source_dims: dims,
            stride: 1,
        }
    }

    #[inline]
    pub fn coord(&self, local: [usize; 3]) -> [f32; 3] {
        std::array::from_fn(|a| axis_coord(self.source_dims[a], local[a] * self.stride) as f32)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    dims: Dims,
    data: Vec<f32>,
    value_range: (f64, f64),
    normalized: bool,
    grid: SampleGrid,
}

fn min_max(data: &[f32]) -> (f64, f64) {
    data.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v as f64), hi.max(v as f64))
        })
}

impl Volume {
    pub fn new(dims: Dims, data: Vec<f32>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "volume dims {dims:?} must be positive"
            )));
        }
        Error::check_len(voxel_count(dims), data.len())?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("volume data"));
        }
        let value_range = min_max(&data);
        Ok(Self {
            dims,
            data,
            value_range,
            normalized: false,
            grid: SampleGrid::full(dims),
        })
    }

    /// Wraps values that already live in `[−1, 1]` as a normalized volume whose
    /// original range is taken to be `(−1, 1)`.
    pub fn from_normalized(dims: Dims, data: Vec<f32>) -> Result<Self> {
        let volume = Self::new(dims, data)?;
        if volume.data.iter().any(|v| !(-1.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument(
                "normalized values must lie in [−1, 1]".into(),
            ));
        }
        Ok(Self {
            value_range: (-1.0, 1.0),
            normalized: true,
            ..volume
        })
    }

    /// Builds a volume by evaluating `f(i, j, k)` at every voxel.
    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize) -> f32) -> Result<Self> {
        let mut data = Vec::with_capacity(voxel_count(dims));
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    data.push(f(i, j, k));
                }
            }
        }
        Self::new(dims, data)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `(min, max)` of the original, unnormalized values.
    pub fn value_range(&self) -> (f64, f64) {
        self.value_range
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn grid(&self) -> SampleGrid {
        self.grid
    }

    #[inline]
    pub fn linear_index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.dims[1] + j) * self.dims[0] + i
    }

    #[inline]
    pub fn unravel(&self, index: usize) -> [usize; 3] {
        let i = index % self.dims[0];
        let j = (index / self.dims[0]) % self.dims[1];
        let k = index / (self.dims[0] * self.dims[1]);
        [i, j, k]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f32 {
        self.data[self.linear_index(i, j, k)]
    }

    /// Coordinate of a local voxel, measured on the source grid.
    #[inline]
    pub fn coord(&self, i: usize, j: usize, k: usize) -> [f32; 3] {
        self.grid.coord([i, j, k])
    }

    /// Coordinates of every voxel in storage order.
    pub fn coords(&self) -> Vec<[f32; 3]> {
        (0..self.len())
            .map(|n| self.grid.coord(self.unravel(n)))
            .collect()
    }

    /// Affine map of `[min, max]` onto `[−1, 1]`. A constant volume maps to all
    /// zeros. The original range is kept for [`Volume::denormalize`].
    pub fn normalize(&self) -> Volume {
        if self.normalized {
            return self.clone();
        }
        let (lo, hi) = self.value_range;
        let span = hi - lo;
        let data = self
            .data
            .iter()
            .map(|&v| {
                if span > 0.0 {
                    ((2.0 * (v as f64 - lo) / span - 1.0) as f32).clamp(-1.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect();
        Volume {
            data,
            normalized: true,
            ..self.clone()
        }
    }

    pub fn denormalize(&self) -> Volume {
        if !self.normalized {
            return self.clone();
        }
        let data = self
            .data
            .iter()
            .map(|&v| denormalize_value(v as f64, self.value_range) as f32)
            .collect();
        Volume {
            data,
            normalized: false,
            ..self.clone()
        }
    }

    /// Keeps voxels whose index on every axis is a multiple of `stride`.
    pub fn subsample(&self, stride: usize) -> Result<Volume> {
        if stride == 0 {
            return Err(Error::InvalidArgument("spatial stride must be ≥ 1".into()));
        }
        let dims: Dims = std::array::from_fn(|a| self.dims[a].div_ceil(stride));
        let mut data = Vec::with_capacity(voxel_count(dims));
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    data.push(self.get(i * stride, j * stride, k * stride));
                }
            }
        }
        Ok(Volume {
            dims,
            data,
            value_range: self.value_range,
            normalized: self.normalized,
            grid: SampleGrid {
                source_dims: self.grid.source_dims,
                stride: self.grid.stride * stride,
            },
        })
    }

    /// Replaces the voxel values, keeping dims, range and grid.
    pub fn with_data(&self, data: Vec<f32>) -> Result<Volume> {
        Error::check_len(self.len(), data.len())?;
        Ok(Volume {
            data,
            ..self.clone()
        })
    }
}

/// Inverse of the `[min, max] → [−1, 1]` normalization.
#[inline]
pub fn denormalize_value(v: f64, (lo, hi): (f64, f64)) -> f64 {
    lo + (v + 1.0) * 0.5 * (hi - lo)
}

/// Reads a little-endian `f32` volume stored x-fastest.
pub fn load_raw(path: impl AsRef<Path>, dims: Dims) -> Result<Volume> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = voxel_count(dims) * 4;
    if bytes.len() != expected {
        return Err(Error::Format {
            path: path.to_owned(),
            reason: format!(
                "{} bytes, expected {expected} for dims {dims:?}",
                bytes.len()
            ),
        });
    }
    let data: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::Data {
            path: path.to_owned(),
            reason: format!("non-finite value at voxel {bad}"),
        });
    }
    Volume::new(dims, data)
}

pub fn write_raw(volume: &Volume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::with_capacity(volume.len() * 4);
    for v in volume.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Label attached to a dataset member, e.g. a simulation parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelValue {
    Number(f64),
    Text(String),
}

impl fmt::Display for LabelValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelValue::Number(v) => write!(f, "{v}"),
            LabelValue::Text(s) => f.write_str(s),
        }
    }
}

pub type Labels = BTreeMap<String, LabelValue>;

fn default_dtype() -> String {
    "f32-le".to_owned()
}

/// JSON description of a time-varying or ensemble sequence of raw volumes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetDescriptor {
    pub name: String,
    pub dims: Dims,
    pub count: usize,
    /// File name pattern relative to the descriptor, e.g. `vol_{index:04}.raw`.
    pub path_pattern: String,
    #[serde(default = "default_dtype")]
    pub dtype: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<Labels>>,
}

impl DatasetDescriptor {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::InvalidArgument("dataset count must be ≥ 1".into()));
        }
        if self.dims.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "dataset dims {:?} must be positive",
                self.dims
            )));
        }
        if self.dtype != "f32-le" {
            return Err(Error::InvalidArgument(format!(
                "unsupported dtype {:?}",
                self.dtype
            )));
        }
        if let Some(labels) = &self.labels {
            Error::check_len(self.count, labels.len())?;
        }
        format_index(&self.path_pattern, 0)?;
        Ok(())
    }

    pub fn member_file_name(&self, index: usize) -> Result<String> {
        format_index(&self.path_pattern, index)
    }
}

/// Expands `{index}` or `{index:0N}` / `{index:N}` in `pattern`.
fn format_index(pattern: &str, index: usize) -> Result<String> {
    let bad = || Error::InvalidArgument(format!("bad path pattern {pattern:?}"));
    let start = pattern.find("{index").ok_or_else(bad)?;
    let end = start + pattern[start..].find('}').ok_or_else(bad)?;
    let spec = &pattern[start + "{index".len()..end];
    let rendered = match spec.strip_prefix(':') {
        None if spec.is_empty() => index.to_string(),
        None => return Err(bad()),
        Some(width) => {
            let zero = width.starts_with('0');
            let width: usize = width.parse().map_err(|_| bad())?;
            if zero {
                format!("{index:0width$}")
            } else {
                format!("{index:width$}")
            }
        }
    };
    Ok(format!(
        "{}{}{}",
        &pattern[..start],
        rendered,
        &pattern[end + 1..]
    ))
}

/// Anything that can hand out the members of a volume sequence.
pub trait VolumeSource: Sync {
    fn name(&self) -> &str;
    fn dims(&self) -> Dims;
    fn count(&self) -> usize;
    /// Loads member `index` as stored; file-backed members are unnormalized.
    fn load(&self, index: usize) -> Result<Volume>;
    fn labels(&self, _index: usize) -> Option<&Labels> {
        None
    }
}

/// A descriptor bound to the directory its relative paths resolve against.
#[derive(Clone, Debug)]
pub struct Dataset {
    descriptor: DatasetDescriptor,
    root: PathBuf,
}

impl Dataset {
    /// Reads a descriptor and checks that every member file exists.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let descriptor: DatasetDescriptor =
            serde_json::from_str(&text).map_err(|source| Error::Descriptor {
                path: path.to_owned(),
                source,
            })?;
        let root = path.parent().map(Path::to_owned).unwrap_or_default();
        let dataset = Self::with_root(descriptor, root)?;
        for index in 0..dataset.descriptor.count {
            let member = dataset.member_path(index)?;
            if !member.is_file() {
                return Err(Error::member(
                    index,
                    Error::io(member, std::io::ErrorKind::NotFound.into()),
                ));
            }
        }
        Ok(dataset)
    }

    pub fn with_root(descriptor: DatasetDescriptor, root: impl Into<PathBuf>) -> Result<Self> {
        descriptor.validate()?;
        Ok(Self {
            descriptor,
            root: root.into(),
        })
    }

    pub fn descriptor(&self) -> &DatasetDescriptor {
        &self.descriptor
    }

    pub fn member_path(&self, index: usize) -> Result<PathBuf> {
        Ok(self.root.join(self.descriptor.member_file_name(index)?))
    }

    /// Writes `volumes` and a descriptor named `<name>.json` into `dir`.
    pub fn create(
        dir: impl AsRef<Path>,
        name: &str,
        path_pattern: &str,
        volumes: &[Volume],
        labels: Option<Vec<Labels>>,
    ) -> Result<(PathBuf, Dataset)> {
        let dir = dir.as_ref();
        let first = volumes.first().ok_or(Error::Empty("dataset"))?;
        let descriptor = DatasetDescriptor {
            name: name.to_owned(),
            dims: first.dims(),
            count: volumes.len(),
            path_pattern: path_pattern.to_owned(),
            dtype: default_dtype(),
            labels,
        };
        let dataset = Self::with_root(descriptor, dir)?;
        for (i, v) in volumes.iter().enumerate() {
            if v.dims() != first.dims() {
                return Err(Error::member(
                    i,
                    Error::InvalidArgument("dims differ from member 0".into()),
                ));
            }
            write_raw(&v.denormalize(), dataset.member_path(i)?)?;
        }
        let path = dir.join(format!("{name}.json"));
        let json =
            serde_json::to_string_pretty(&dataset.descriptor).expect("descriptor serializes");
        fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
        Ok((path, dataset))
    }
}

impl VolumeSource for Dataset {
    fn name(&self) -> &str {
        &self.descriptor.name
    }

    fn dims(&self) -> Dims {
        self.descriptor.dims
    }

    fn count(&self) -> usize {
        self.descriptor.count
    }

    fn load(&self, index: usize) -> Result<Volume> {
        if index >= self.descriptor.count {
            return Err(Error::InvalidArgument(format!(
                "member {index} out of range"
            )));
        }
        load_raw(self.member_path(index)?, self.descriptor.dims)
            .map_err(|e| Error::member(index, e))
    }

    fn labels(&self, index: usize) -> Option<&Labels> {
        self.descriptor.labels.as_ref().and_then(|l| l.get(index))
    }
}

/// Volume sequence held in memory.
#[derive(Clone, Debug)]
pub struct InMemoryDataset {
    name: String,
    volumes: Vec<Volume>,
}

impl InMemoryDataset {
    pub fn new(name: impl Into<String>, volumes: Vec<Volume>) -> Result<Self> {
        let first = volumes.first().ok_or(Error::Empty("dataset"))?;
        if volumes.iter().any(|v| v.dims() != first.dims()) {
            return Err(Error::InvalidArgument("members must share dims".into()));
        }
        Ok(Self {
            name: name.into(),
            volumes,
        })
    }

    pub fn volumes(&self) -> &[Volume] {
        &self.volumes
    }
}

impl VolumeSource for InMemoryDataset {
    fn name(&self) -> &str {
        &self.name
    }

    fn dims(&self) -> Dims {
        self.volumes[0].dims()
    }

    fn count(&self) -> usize {
        self.volumes.len()
    }

    fn load(&self, index: usize) -> Result<Volume> {
        self.volumes
            .get(index)
            .cloned()
            .ok_or_else(|| Error::InvalidArgument(format!("member {index} out of range")))
    }
}

/// Fraction of all voxels across the sequence kept by
/// [`subsample_dataset`] with the given strides.
pub fn retained_fraction(dims: Dims, count: usize, spatial: usize, temporal: usize) -> f64 {
    let kept: usize =
        dims.iter().map(|n| n.div_ceil(spatial)).product::<usize>() * count.div_ceil(temporal);
    kept as f64 / (voxel_count(dims) * count) as f64
}

/// Keeps every `temporal`-th member and, within each, every `spatial`-th
/// voxel per axis, anchored at index 0. Members not yet normalized are
/// normalized at full resolution before subsampling.
pub fn subsample_dataset<S: VolumeSource + ?Sized>(
    source: &S,
    spatial: usize,
    temporal: usize,
) -> Result<Vec<(Volume, usize)>> {
    if spatial == 0 || temporal == 0 {
        return Err(Error::InvalidArgument(
            "subsampling intervals must be ≥ 1".into(),
        ));
    }
    (0..source.count())
        .step_by(temporal)
        .map(|index| {
            let volume = source
                .load(index)
                .and_then(|v| v.normalize().subsample(spatial))
                .map_err(|e| Error::member(index, e))?;
            Ok((volume, index))
        })
        .collect()
}

/// Coordinate-value pairs drawn from one volume.
#[derive(Clone, Debug, PartialEq)]
pub struct CoordBatch {
    pub coords: Vec<[f32; 3]>,
    pub values: Vec<f32>,
}

impl CoordBatch {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Every voxel of `volume`, in storage order.
    pub fn full(volume: &Volume) -> Self {
        Self {
            coords: volume.coords(),
            values: volume.data().to_vec(),
        }
    }

    /// Flat inputs and targets in the training precision.
    pub fn to_real<T: crate::Real>(&self) -> (Vec<T>, Vec<T>) {
        let inputs = self
            .coords
            .as_flattened()
            .iter()
            .map(|&c| T::of(c as f64))
            .collect();
        let targets = self.values.iter().map(|&v| T::of(v as f64)).collect();
        (inputs, targets)
    }
}

/// Draws `n` voxels uniformly with replacement.
pub fn sample_batch(volume: &Volume, n: usize, rng: &mut Rng) -> Result<CoordBatch> {
    if n == 0 {
        return Err(Error::InvalidArgument("batch size must be ≥ 1".into()));
    }
    if volume.is_empty() {
        return Err(Error::Empty("volume"));
    }
    let mut coords = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        let index = rng.random_range(0..volume.len());
        coords.push(volume.grid().coord(volume.unravel(index)));
        values.push(volume.data()[index]);
    }
    Ok(CoordBatch { coords, values })
}
