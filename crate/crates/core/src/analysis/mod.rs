//! Parameter-space views of a set of adapted networks.

mod tsne;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use tsne::{tsne_project, TsneConfig};

use crate::nn::Real;
use crate::training::AdaptedModelSet;
use crate::volume::Labels;
use crate::{Error, Result};

/// One flattened parameter vector per member, rows ordered by member index.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    member_ids: Vec<usize>,
}

impl ParamMatrix {
    pub fn from_models<T: Real>(models: &AdaptedModelSet<T>) -> Result<Self> {
        let rows = models
            .models
            .iter()
            .map(|m| {
                (
                    m.member_index,
                    m.params.as_slice().iter().map(|v| v.f64()).collect(),
                )
            })
            .collect();
        Self::from_rows(rows)
    }

    /// Builds the matrix from `(member index, row)` pairs in any order.
    pub fn from_rows(mut rows: Vec<(usize, Vec<f64>)>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Empty("model set"));
        }
        rows.sort_by_key(|(id, _)| *id);
        if rows.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidArgument("duplicate member index".into()));
        }
        let cols = rows[0].1.len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        let mut member_ids = Vec::with_capacity(rows.len());
        for (id, row) in rows {
            if row.len() != cols {
                return Err(Error::Schema(format!(
                    "member {id} has {} parameters, expected {cols}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("parameter matrix"));
            }
            data.extend(row);
            member_ids.push(id);
        }
        Ok(Self {
            rows: member_ids.len(),
            cols,
            data,
            member_ids,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn member_ids(&self) -> &[usize] {
        &self.member_ids
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.cols..(t + 1) * self.cols]
    }

    /// Every column shifted to zero mean and scaled to unit variance;
    /// constant columns become zero.
    pub fn standardized(&self) -> Self {
        let n = self.rows as f64;
        let mut data = self.data.clone();
        for c in 0..self.cols {
            let mean = (0..self.rows)
                .map(|r| self.data[r * self.cols + c])
                .sum::<f64>()
                / n;
            let var = (0..self.rows)
                .map(|r| (self.data[r * self.cols + c] - mean).powi(2))
                .sum::<f64>()
                / n;
            let scale = if var > 0.0 { 1.0 / var.sqrt() } else { 0.0 };
            for r in 0..self.rows {
                let v = &mut data[r * self.cols + c];
                *v = (*v - mean) * scale;
            }
        }
        Self {
            data,
            ..self.clone()
        }
    }

    /// Squared Euclidean distances between all pairs of rows.
    pub fn squared_distances(&self) -> Vec<Vec<f64>> {
        (0..self.rows)
            .into_par_iter()
            .map(|i| {
                (0..self.rows)
                    .map(|j| sq_dist(self.row(i), self.row(j)))
                    .collect()
            })
            .collect()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionMethod {
    Pca,
    Tsne,
}

/// A 2-D embedding of the members of a [`ParamMatrix`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Projection2D {
    pub points: Vec<[f64; 2]>,
    pub member_ids: Vec<usize>,
    pub method: ProjectionMethod,
    pub seed: Option<u64>,
    /// Per-member labels, aligned with `member_ids`.
    pub labels: Option<Vec<Labels>>,
    /// t-SNE KL divergence after each iteration; empty for PCA.
    pub objective_trace: Vec<f64>,
}

impl Projection2D {
    /// Attaches labels from a descriptor's per-member list.
    pub fn with_labels(mut self, all: &[Labels]) -> Result<Self> {
        let picked = self
            .member_ids
            .iter()
            .map(|&id| {
                all.get(id)
                    .cloned()
                    .ok_or_else(|| Error::InvalidArgument(format!("no labels for member {id}")))
            })
            .collect::<Result<_>>()?;
        self.labels = Some(picked);
        Ok(self)
    }
}

/// Projection of the mean-centered rows onto their top `out_dim` principal
/// directions, computed from the T×T Gram matrix. Each axis is oriented so its
/// largest-magnitude coordinate is positive.
pub fn pca_project(matrix: &ParamMatrix, out_dim: usize) -> Result<Vec<Vec<f64>>> {
    let t = matrix.rows();
    if t < 2 {
        return Err(Error::InvalidArgument(
            "PCA needs at least 2 members".into(),
        ));
    }
    if out_dim == 0 || out_dim > t {
        return Err(Error::InvalidArgument(format!(
            "cannot project {t} members to {out_dim} dimensions"
        )));
    }
    let p = matrix.cols();
    let mean: Vec<f64> = (0..p)
        .map(|c| (0..t).map(|r| matrix.row(r)[c]).sum::<f64>() / t as f64)
        .collect();
    let centered: Vec<Vec<f64>> = (0..t)
        .map(|r| {
            matrix
                .row(r)
                .iter()
                .zip(&mean)
                .map(|(v, m)| v - m)
                .collect()
        })
        .collect();
    let gram_rows: Vec<Vec<f64>> = (0..t)
        .into_par_iter()
        .map(|i| {
            (0..t)
                .map(|j| {
                    centered[i]
                        .iter()
                        .zip(&centered[j])
                        .map(|(a, b)| a * b)
                        .sum()
                })
                .collect()
        })
        .collect();
    let gram = DMatrix::from_fn(t, t, |i, j| 0.5 * (gram_rows[i][j] + gram_rows[j][i]));
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..t).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });

    let mut coords = vec![vec![0.0; out_dim]; t];
    for (axis, &k) in order.iter().take(out_dim).enumerate() {
        let scale = eig.eigenvalues[k].max(0.0).sqrt();
        let column = eig.eigenvectors.column(k);
        let pivot = (0..t)
            .max_by(|&a, &b| column[a].abs().total_cmp(&column[b].abs()).then(b.cmp(&a)))
            .unwrap_or(0);
        let sign = if column[pivot] < 0.0 { -1.0 } else { 1.0 };
        for (r, row) in coords.iter_mut().enumerate() {
            row[axis] = sign * column[r] * scale;
        }
    }
    Ok(coords)
}

/// Two-component PCA as a [`Projection2D`].
pub fn pca_projection(matrix: &ParamMatrix) -> Result<Projection2D> {
    let coords = pca_project(matrix, 2)?;
    Ok(Projection2D {
        points: coords.into_iter().map(|c| [c[0], c[1]]).collect(),
        member_ids: matrix.member_ids().to_vec(),
        method: ProjectionMethod::Pca,
        seed: None,
        labels: None,
        objective_trace: Vec::new(),
    })
}

/// Representative members chosen by greedy farthest-point sampling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Member indices, ascending.
    pub selected: Vec<usize>,
    pub k: usize,
    /// Distance from each selected member (same order as `selected`) to the
    /// members chosen before it; 0 for the first member.
    pub criterion: Vec<f64>,
    /// Member indices in the order they were picked.
    pub pick_order: Vec<usize>,
}

/// Greedy farthest-point selection in raw parameter space, starting from the
/// first row. Ties go to the lower row.
pub fn select_timesteps(matrix: &ParamMatrix, k: usize) -> Result<SelectionResult> {
    let t = matrix.rows();
    if k == 0 || k > t {
        return Err(Error::InvalidArgument(format!(
            "k must be in 1..={t}, got {k}"
        )));
    }
    let mut nearest: Vec<f64> = (0..t)
        .map(|r| sq_dist(matrix.row(0), matrix.row(r)))
        .collect();
    let mut chosen = vec![false; t];
    chosen[0] = true;
    let mut picks = vec![(0usize, 0.0f64)];
    while picks.len() < k {
        let mut best: Option<usize> = None;
        for r in 0..t {
            if !chosen[r] && best.is_none_or(|b| nearest[r] > nearest[b]) {
                best = Some(r);
            }
        }
        let b = best.expect("k ≤ T leaves an unchosen row");
        chosen[b] = true;
        picks.push((b, nearest[b].sqrt()));
        let row = matrix.row(b);
        let updates: Vec<f64> = (0..t)
            .into_par_iter()
            .map(|r| sq_dist(row, matrix.row(r)))
            .collect();
        for (n, d) in nearest.iter_mut().zip(updates) {
            *n = n.min(d);
        }
    }
    let pick_order = picks.iter().map(|&(r, _)| matrix.member_ids()[r]).collect();
    let mut sorted = picks;
    sorted.sort_by_key(|&(r, _)| r);
    Ok(SelectionResult {
        selected: sorted
            .iter()
            .map(|&(r, _)| matrix.member_ids()[r])
            .collect(),
        k,
        criterion: sorted.iter().map(|&(_, d)| d).collect(),
        pick_order,
    })
}

/// Angles (radians) between consecutive segments of the path through `points`.
/// A zero-length segment contributes an angle of 0.
pub fn turning_angles<P: AsRef<[f64]>>(points: &[P]) -> Result<Vec<f64>> {
    if points.len() < 3 {
        return Err(Error::InvalidArgument(
            "a turning angle needs at least 3 points".into(),
        ));
    }
    let dim = points[0].as_ref().len();
    if points.iter().any(|p| p.as_ref().len() != dim) {
        return Err(Error::InvalidArgument("points differ in dimension".into()));
    }
    Ok(points
        .windows(3)
        .map(|w| {
            let (a, b, c) = (w[0].as_ref(), w[1].as_ref(), w[2].as_ref());
            let (mut dot, mut n1, mut n2) = (0.0, 0.0, 0.0);
            for i in 0..dim {
                let (u, v) = (b[i] - a[i], c[i] - b[i]);
                dot += u * v;
                n1 += u * u;
                n2 += v * v;
            }
            if n1 == 0.0 || n2 == 0.0 {
                0.0
            } else {
                (dot / (n1.sqrt() * n2.sqrt())).clamp(-1.0, 1.0).acos()
            }
        })
        .collect())
}

/// Mean turning angle along the path; lower is smoother.
pub fn smoothness_score<P: AsRef<[f64]>>(points: &[P]) -> Result<f64> {
    let angles = turning_angles(points)?;
    Ok(angles.iter().sum::<f64>() / angles.len() as f64)
}

/// Mean Euclidean distance between consecutive points.
pub fn mean_step_distance<P: AsRef<[f64]>>(points: &[P]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::InvalidArgument(
            "a step needs at least 2 points".into(),
        ));
    }
    let total: f64 = points
        .windows(2)
        .map(|w| sq_dist(w[0].as_ref(), w[1].as_ref()).sqrt())
        .sum();
    Ok(total / (points.len() - 1) as f64)
}

/// Rows of a matrix as a path, for the path metrics above.
pub fn matrix_path(matrix: &ParamMatrix) -> Vec<&[f64]> {
    (0..matrix.rows()).map(|r| matrix.row(r)).collect()
}

/// Member ids grouped by the value of label `key`. Members without that label
/// are left out.
pub fn group_by_label(
    member_ids: &[usize],
    labels: &[Labels],
    key: &str,
) -> Result<BTreeMap<String, Vec<usize>>> {
    if member_ids.len() != labels.len() {
        return Err(Error::LengthMismatch {
            expected: member_ids.len(),
            actual: labels.len(),
        });
    }
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (&id, l) in member_ids.iter().zip(labels) {
        if let Some(v) = l.get(key) {
            groups.entry(v.to_string()).or_default().push(id);
        }
    }
    Ok(groups)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_siren, Schema};
    use crate::training::AdaptedModel;
    use crate::volume::LabelValue;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn random_rows(t: usize, p: usize, seed: u64) -> Vec<(usize, Vec<f64>)> {
        let mut r = crate::rng::seeded(seed);
        (0..t)
            .map(|i| (i, (0..p).map(|_| r.random_range(-1.0..1.0)).collect()))
            .collect()
    }

    fn model_set(t: usize) -> AdaptedModelSet<f32> {
        let schema = Schema::coordinate_net(8, 3).unwrap();
        let models = (0..t)
            .rev()
            .map(|i| AdaptedModel {
                member_index: i,
                params: init_siren(&schema, i as u64),
                value_range: (0.0, 1.0),
                encode_seconds: 0.0,
                final_train_mse: 0.0,
            })
            .collect();
        AdaptedModelSet::new("set", models).unwrap()
    }

    #[test]
    fn matrix_rows_are_flattened_params() {
        let set = model_set(5);
        let m = ParamMatrix::from_models(&set).unwrap();
        assert_eq!((m.rows(), m.cols()), (5, set.models[0].params.len()));
        assert_eq!(m.member_ids(), &[0, 1, 2, 3, 4]);
        for (t, model) in set.models.iter().enumerate() {
            let expected: Vec<f64> = model.params.flatten().iter().map(|&v| v as f64).collect();
            assert_eq!(m.row(t), &expected[..]);
        }
        assert_eq!(ParamMatrix::from_models(&model_set(1)).unwrap().rows(), 1);
    }

    #[test]
    fn matrix_rejects_ragged_and_empty() {
        assert!(ParamMatrix::from_rows(vec![]).is_err());
        assert!(ParamMatrix::from_rows(vec![(0, vec![1.0, 2.0]), (1, vec![1.0])]).is_err());
        assert!(ParamMatrix::from_rows(vec![(0, vec![1.0]), (0, vec![1.0])]).is_err());
    }

    #[test]
    fn standardized_columns_have_unit_variance() {
        let m = ParamMatrix::from_rows(random_rows(6, 4, 1))
            .unwrap()
            .standardized();
        for c in 0..4 {
            let col: Vec<f64> = (0..6).map(|r| m.row(r)[c]).collect();
            let mean = col.iter().sum::<f64>() / 6.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 6.0;
            assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
        }
    }

    fn pairwise(points: &[Vec<f64>]) -> Vec<f64> {
        let mut d = Vec::new();
        for i in 0..points.len() {
            for j in i + 1..points.len() {
                d.push(sq_dist(&points[i], &points[j]).sqrt());
            }
        }
        d
    }

    #[test]
    fn pca_preserves_distances_in_planar_data() {
        let mut r = crate::rng::seeded(3);
        let p = 50;
        let origin: Vec<f64> = (0..p).map(|_| r.random_range(-1.0..1.0)).collect();
        let u: Vec<f64> = (0..p).map(|_| r.random_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..p).map(|_| r.random_range(-1.0..1.0)).collect();
        let rows: Vec<(usize, Vec<f64>)> = (0..12)
            .map(|i| {
                let (a, b) = (r.random_range(-3.0..3.0), r.random_range(-3.0..3.0));
                (i, (0..p).map(|c| origin[c] + a * u[c] + b * v[c]).collect())
            })
            .collect();
        let full: Vec<Vec<f64>> = rows.iter().map(|(_, row)| row.clone()).collect();
        let m = ParamMatrix::from_rows(rows).unwrap();
        let proj = pca_project(&m, 2).unwrap();
        for (a, b) in pairwise(&full).iter().zip(pairwise(&proj)) {
            assert!((a - b).abs() <= 1e-6 * a.max(1e-12));
        }
    }

    #[test]
    fn pca_maps_duplicates_together_and_ignores_translation() {
        let mut rows = random_rows(6, 20, 4);
        rows.push((6, rows[2].1.clone()));
        let m = ParamMatrix::from_rows(rows.clone()).unwrap();
        let proj = pca_project(&m, 2).unwrap();
        assert!(sq_dist(&proj[2], &proj[6]) < 1e-20);

        let shifted: Vec<(usize, Vec<f64>)> = rows
            .into_iter()
            .map(|(i, r)| {
                (
                    i,
                    r.iter()
                        .enumerate()
                        .map(|(c, v)| v + 5.0 + c as f64)
                        .collect(),
                )
            })
            .collect();
        let moved = pca_project(&ParamMatrix::from_rows(shifted).unwrap(), 2).unwrap();
        for (a, b) in proj.iter().zip(&moved) {
            for axis in 0..2 {
                assert!((a[axis].abs() - b[axis].abs()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn pca_captures_more_variance_than_random_planes() {
        let (t, p) = (15, 30);
        let m = ParamMatrix::from_rows(random_rows(t, p, 5)).unwrap();
        let captured: f64 = pca_project(&m, 2)
            .unwrap()
            .iter()
            .flatten()
            .map(|v| v * v)
            .sum();
        let mean: Vec<f64> = (0..p)
            .map(|c| (0..t).map(|r| m.row(r)[c]).sum::<f64>() / t as f64)
            .collect();
        let mut r = crate::rng::seeded(6);
        for _ in 0..100 {
            // Gram-Schmidt on two random directions.
            let mut a: Vec<f64> = (0..p).map(|_| r.random_range(-1.0..1.0)).collect();
            let mut b: Vec<f64> = (0..p).map(|_| r.random_range(-1.0..1.0)).collect();
            let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            a.iter_mut().for_each(|x| *x /= na);
            let d: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
            b.iter_mut().zip(&a).for_each(|(y, x)| *y -= d * x);
            let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            b.iter_mut().for_each(|x| *x /= nb);
            let other: f64 = (0..t)
                .map(|row| {
                    let c: Vec<f64> = m.row(row).iter().zip(&mean).map(|(v, mu)| v - mu).collect();
                    let pa: f64 = c.iter().zip(&a).map(|(x, y)| x * y).sum();
                    let pb: f64 = c.iter().zip(&b).map(|(x, y)| x * y).sum();
                    pa * pa + pb * pb
                })
                .sum();
            assert!(captured >= other - 1e-9);
        }
    }

    #[test]
    fn pca_needs_two_rows() {
        let m = ParamMatrix::from_rows(random_rows(1, 3, 7)).unwrap();
        assert!(pca_project(&m, 2).is_err());
    }

    #[test]
    fn selection_edge_cases() {
        let m = ParamMatrix::from_rows(random_rows(7, 5, 8)).unwrap();
        assert_eq!(
            select_timesteps(&m, 7).unwrap().selected,
            (0..7).collect::<Vec<_>>()
        );
        assert_eq!(select_timesteps(&m, 1).unwrap().selected, vec![0]);
        assert!(select_timesteps(&m, 0).is_err());
        assert!(select_timesteps(&m, 8).is_err());
    }

    fn plateaus() -> Vec<(usize, Vec<f64>)> {
        let mut r = crate::rng::seeded(9);
        let levels = [
            [0.0, 0.0, 0.0, 0.0],
            [10.0, -4.0, 3.0, 7.0],
            [-6.0, 9.0, -8.0, 2.0],
        ];
        (0..30)
            .map(|i| {
                (
                    i,
                    levels[i / 10]
                        .iter()
                        .map(|&v| v + r.random_range(-0.1..0.1))
                        .collect(),
                )
            })
            .collect()
    }

    #[test]
    fn selection_covers_each_plateau() {
        let m = ParamMatrix::from_rows(plateaus()).unwrap();
        let s = select_timesteps(&m, 3).unwrap();
        let mut plateaus_hit: Vec<usize> = s.selected.iter().map(|i| i / 10).collect();
        plateaus_hit.dedup();
        assert_eq!(plateaus_hit, vec![0, 1, 2]);
        assert_eq!(s.criterion.len(), 3);
        assert_eq!(s.pick_order[0], 0);
    }

    #[test]
    fn selection_ties_go_to_lower_index() {
        let rows = vec![(0, vec![0.0]), (1, vec![1.0]), (2, vec![-1.0])];
        let s = select_timesteps(&ParamMatrix::from_rows(rows).unwrap(), 2).unwrap();
        assert_eq!(s.selected, vec![0, 1]);
    }

    #[test]
    fn selection_unchanged_by_duplicated_columns() {
        let rows = random_rows(20, 6, 10);
        let doubled: Vec<(usize, Vec<f64>)> = rows
            .iter()
            .map(|(i, r)| (*i, r.iter().chain(r.iter()).copied().collect()))
            .collect();
        let a = select_timesteps(&ParamMatrix::from_rows(rows).unwrap(), 6).unwrap();
        let b = select_timesteps(&ParamMatrix::from_rows(doubled).unwrap(), 6).unwrap();
        assert_eq!(a.selected, b.selected);
    }

    #[test]
    fn smoothness_of_line_and_zigzag() {
        let line: Vec<[f64; 2]> = (0..6).map(|i| [i as f64, 2.0 * i as f64]).collect();
        assert!(smoothness_score(&line).unwrap().abs() < 1e-7);
        let zigzag = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [2.0, 1.0], [2.0, 2.0]];
        assert!((smoothness_score(&zigzag).unwrap() - FRAC_PI_2).abs() < 1e-12);
        assert!(smoothness_score(&zigzag[..2]).is_err());
        assert!((mean_step_distance(&zigzag).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn label_groups() {
        let labels: Vec<Labels> = [0.1, 0.2, 0.1]
            .iter()
            .map(|&h| Labels::from([("h0".to_string(), LabelValue::Number(h))]))
            .collect();
        let groups = group_by_label(&[0, 1, 2], &labels, "h0").unwrap();
        assert_eq!(groups.len(), 2);
        assert_eq!(groups["0.1"], vec![0, 2]);
        assert!(group_by_label(&[0, 1, 2], &labels, "missing")
            .unwrap()
            .is_empty());
    }

    proptest! {
        #[test]
        fn turning_angles_lie_in_zero_pi(points in prop::collection::vec(prop::array::uniform3(-5.0..5.0f64), 3..20)) {
            for a in turning_angles(&points).unwrap() {
                prop_assert!((0.0..=std::f64::consts::PI).contains(&a));
            }
        }
    }
}
