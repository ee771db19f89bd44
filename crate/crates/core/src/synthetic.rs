//! Small analytic volumes used by tests, benchmarks and demos.

use crate::volume::{Dims, Volume};

/// `exp(−‖p − c‖² / 2σ²)` with `center` and `sigma` in voxel units.
pub fn gaussian_blob(dims: Dims, center: [f64; 3], sigma: f64) -> Volume {
    let inv = 1.0 / (2.0 * sigma * sigma);
    Volume::from_fn(dims, |i, j, k| {
        let d2 = [i, j, k]
            .iter()
            .zip(center)
            .map(|(&p, c)| (p as f64 - c).powi(2))
            .sum::<f64>();
        (-d2 * inv).exp() as f32
    })
    .expect("analytic volume is finite")
}

/// A Gaussian blob translating smoothly through the volume, one member per
/// time step. The center moves from 30 % to 70 % of the extent along x and
/// drifts along y and z.
pub fn moving_blob_sequence(dims: Dims, count: usize, sigma: f64) -> Vec<Volume> {
    (0..count)
        .map(|t| {
            let s = if count > 1 {
                t as f64 / (count - 1) as f64
            } else {
                0.5
            };
            let extent = |a: usize| (dims[a] - 1) as f64;
            let center = [
                extent(0) * (0.3 + 0.4 * s),
                extent(1) * (0.4 + 0.2 * s),
                extent(2) * (0.55 - 0.1 * s),
            ];
            gaussian_blob(dims, center, sigma)
        })
        .collect()
}

/// Signed distance `‖p − c‖ − r` in voxel units.
pub fn sphere_sdf(dims: Dims, center: [f64; 3], radius: f64) -> Volume {
    Volume::from_fn(dims, |i, j, k| {
        let d2 = [i, j, k]
            .iter()
            .zip(center)
            .map(|(&p, c)| (p as f64 - c).powi(2))
            .sum::<f64>();
        (d2.sqrt() - radius) as f32
    })
    .expect("analytic volume is finite")
}

pub fn constant(dims: Dims, value: f32) -> Volume {
    Volume::from_fn(dims, |_, _, _| value).expect("finite constant")
}
