//! Decoding networks back to grids and scoring reconstructions.

mod chamfer;
mod mesh;
mod tables;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use chamfer::{chamfer, chamfer_brute_force, KdTree};
pub use mesh::{marching_cubes, TriangleMesh};

use crate::nn::{forward, Real};
use crate::volume::{axis_coord, denormalize_value, voxel_count, Dims};
use crate::{Error, MlpParameters, Result, Volume};

/// Evaluates the network at every voxel of a `dims` grid, one z-slab at a
/// time, and maps outputs back to `value_range`. With `clamp`, outputs are
/// limited to `[−1, 1]` first.
pub fn reconstruct_volume<T: Real>(
    params: &MlpParameters<T>,
    dims: Dims,
    value_range: (f64, f64),
    clamp: bool,
) -> Result<Volume> {
    if dims.contains(&0) {
        return Err(Error::InvalidArgument(format!(
            "volume dims {dims:?} must be positive"
        )));
    }
    if params.schema().in_dim() != 3 || params.schema().out_dim() != 1 {
        return Err(Error::Schema("reconstruction needs a 3 → 1 network".into()));
    }
    let [nx, ny, nz] = dims;
    let xs: Vec<T> = (0..nx)
        .map(|i| T::of(axis_coord(nx, i) as f32 as f64))
        .collect();
    let ys: Vec<T> = (0..ny)
        .map(|j| T::of(axis_coord(ny, j) as f32 as f64))
        .collect();
    let slabs: Vec<Result<Vec<f32>>> = (0..nz)
        .into_par_iter()
        .map(|k| {
            let z = T::of(axis_coord(nz, k) as f32 as f64);
            let mut inputs = Vec::with_capacity(nx * ny * 3);
            for &y in &ys {
                for &x in &xs {
                    inputs.extend([x, y, z]);
                }
            }
            let out = forward(params, &inputs)?;
            Ok(out
                .into_iter()
                .map(|v| {
                    let v = v.f64();
                    let v = if clamp { v.clamp(-1.0, 1.0) } else { v };
                    denormalize_value(v, value_range) as f32
                })
                .collect())
        })
        .collect();
    let mut data = Vec::with_capacity(voxel_count(dims));
    for slab in slabs {
        data.extend(slab?);
    }
    Volume::new(dims, data)
}

/// Mean squared voxel difference.
pub fn mse(reference: &Volume, candidate: &Volume) -> Result<f64> {
    if reference.dims() != candidate.dims() {
        return Err(Error::InvalidArgument(format!(
            "dims differ: {:?} vs {:?}",
            reference.dims(),
            candidate.dims()
        )));
    }
    let sum: f64 = reference
        .data()
        .iter()
        .zip(candidate.data())
        .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
        .sum();
    Ok(sum / reference.len() as f64)
}

/// Peak used in the PSNR numerator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PsnrPeak {
    /// `max − min` of the reference volume's values.
    #[default]
    Reference,
    Fixed(f64),
}

pub fn psnr_from_mse(mse: f64, range: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (range * range / mse).log10()
    }
}

/// `10 log₁₀(R² / MSE)` with R the reference's value span. Identical volumes
/// give `+∞`.
pub fn psnr(reference: &Volume, candidate: &Volume) -> Result<f64> {
    psnr_with_peak(reference, candidate, PsnrPeak::Reference)
}

pub fn psnr_with_peak(reference: &Volume, candidate: &Volume, peak: PsnrPeak) -> Result<f64> {
    let range = match peak {
        PsnrPeak::Reference => {
            let (lo, hi) = span(reference.data());
            hi - lo
        }
        PsnrPeak::Fixed(r) => r,
    };
    Ok(psnr_from_mse(mse(reference, candidate)?, range))
}

fn span(data: &[f32]) -> (f64, f64) {
    data.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v as f64), hi.max(v as f64))
        })
}

/// Scores for one decoded member.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub member_index: usize,
    pub psnr_db: f64,
    /// Vertex Chamfer distance in voxels; `None` when either isosurface is empty.
    pub chamfer: Option<f64>,
    pub mse: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EvalOptions {
    pub clamp: bool,
    pub peak: PsnrPeak,
}

/// Decodes `params` on the ground truth's grid (in the truth's original value
/// range) and compares: PSNR, MSE, and Chamfer distance between the two
/// isosurfaces at `isovalue` (original units).
pub fn evaluate_member<T: Real>(
    member_index: usize,
    params: &MlpParameters<T>,
    ground_truth: &Volume,
    isovalue: f64,
    options: EvalOptions,
) -> Result<QualityReport> {
    let truth = ground_truth.denormalize();
    let decoded = reconstruct_volume(params, truth.dims(), truth.value_range(), options.clamp)?;
    let mse = mse(&truth, &decoded)?;
    let psnr_db = psnr_with_peak(&truth, &decoded, options.peak)?;
    let a = marching_cubes(&truth, isovalue)?;
    let b = marching_cubes(&decoded, isovalue)?;
    let chamfer = if a.vertices.is_empty() || b.vertices.is_empty() {
        None
    } else {
        Some(chamfer(&a.vertices, &b.vertices)?)
    };
    Ok(QualityReport {
        member_index,
        psnr_db,
        chamfer,
        mse,
    })
}
