use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{ParamMatrix, Projection2D, ProjectionMethod};
use crate::rng::{self, STREAM_TSNE};
use crate::{Error, Result};

/// Exact t-SNE settings. `perplexity: None` picks `min(30, (T − 1) / 3)`;
/// `learning_rate: None` picks `max(T / (4 · exaggeration), 50)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsneConfig {
    pub perplexity: Option<f64>,
    pub iterations: usize,
    pub learning_rate: Option<f64>,
    pub early_exaggeration: f64,
    pub exaggeration_iterations: usize,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: None,
            iterations: 1000,
            learning_rate: None,
            early_exaggeration: 12.0,
            exaggeration_iterations: 250,
            seed: 0,
        }
    }
}

const MIN_GAIN: f64 = 0.01;
const TINY: f64 = 1e-12;

/// Conditional affinities `p_{j|i}` for one row of squared distances, with the
/// Gaussian precision found by bisection so the entropy equals `ln(perplexity)`.
fn conditional_row(d2: &[f64], i: usize, perplexity: f64) -> Vec<f64> {
    let target = perplexity.ln();
    let (mut beta, mut lo, mut hi) = (1.0f64, 0.0f64, f64::INFINITY);
    let d_min = d2
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &d)| d)
        .fold(f64::INFINITY, f64::min);
    let mut p = vec![0.0; d2.len()];
    for _ in 0..200 {
        let mut sum = 0.0;
        let mut weighted = 0.0;
        for (j, (&d, pj)) in d2.iter().zip(p.iter_mut()).enumerate() {
            *pj = if j == i {
                0.0
            } else {
                (-(d - d_min) * beta).exp()
            };
            sum += *pj;
            weighted += (d - d_min) * *pj;
        }
        // H = ln Σ + β·E[d − d_min]
        let entropy = sum.ln() + beta * weighted / sum;
        p.iter_mut().for_each(|v| *v /= sum);
        let gap = entropy - target;
        if gap.abs() < 1e-10 {
            break;
        }
        if gap > 0.0 {
            lo = beta;
            beta = if hi.is_finite() {
                0.5 * (beta + hi)
            } else {
                beta * 2.0
            };
        } else {
            hi = beta;
            beta = 0.5 * (beta + lo);
        }
    }
    p
}

fn kl_divergence(p: &[Vec<f64>], q_num: &[Vec<f64>], q_sum: f64) -> f64 {
    let mut kl = 0.0;
    for (i, row) in p.iter().enumerate() {
        for (j, &pij) in row.iter().enumerate() {
            if i != j && pij > 0.0 {
                let qij = (q_num[i][j] / q_sum).max(TINY);
                kl += pij * (pij / qij).ln();
            }
        }
    }
    kl
}

/// Unnormalized Student-t affinities `1 / (1 + ‖y_i − y_j‖²)`; returns their sum.
fn student_t(y: &[[f64; 2]], num: &mut [Vec<f64>]) -> f64 {
    let mut sum = 0.0;
    for (i, row) in num.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = if i == j {
                0.0
            } else {
                1.0 / (1.0 + (y[i][0] - y[j][0]).powi(2) + (y[i][1] - y[j][1]).powi(2))
            };
            sum += *v;
        }
    }
    sum
}

fn gradient(
    p: &[Vec<f64>],
    num: &[Vec<f64>],
    q_sum: f64,
    y: &[[f64; 2]],
    exaggeration: f64,
) -> Vec<[f64; 2]> {
    (0..y.len())
        .map(|i| {
            let mut g = [0.0; 2];
            for j in 0..y.len() {
                if i != j {
                    let coeff = 4.0 * (exaggeration * p[i][j] - num[i][j] / q_sum) * num[i][j];
                    g[0] += coeff * (y[i][0] - y[j][0]);
                    g[1] += coeff * (y[i][1] - y[j][1]);
                }
            }
            g
        })
        .collect()
}

/// `y + scale · delta`, re-centered at the origin.
fn shifted(y: &[[f64; 2]], delta: &[[f64; 2]], scale: f64) -> Vec<[f64; 2]> {
    let mut out: Vec<[f64; 2]> = y
        .iter()
        .zip(delta)
        .map(|(p, d)| [p[0] + scale * d[0], p[1] + scale * d[1]])
        .collect();
    let n = out.len() as f64;
    let mean = out
        .iter()
        .fold([0.0; 2], |m, v| [m[0] + v[0], m[1] + v[1]])
        .map(|s| s / n);
    out.iter_mut().for_each(|v| {
        v[0] -= mean[0];
        v[1] -= mean[1];
    });
    out
}

/// Exact O(T²) t-SNE of the matrix rows into two dimensions.
pub fn tsne_project(matrix: &ParamMatrix, config: &TsneConfig) -> Result<Projection2D> {
    let t = matrix.rows();
    if t < 4 {
        return Err(Error::InvalidArgument(format!(
            "t-SNE needs at least 4 members, got {t}"
        )));
    }
    let perplexity = config
        .perplexity
        .unwrap_or_else(|| (30.0f64).min((t - 1) as f64 / 3.0));
    if !(perplexity >= 1.0 && perplexity < (t - 1) as f64) {
        return Err(Error::InvalidArgument(format!(
            "perplexity {perplexity} must lie in [1, {})",
            t - 1
        )));
    }
    let mut d2 = matrix.squared_distances();
    let max = d2.iter().flatten().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return Err(Error::InvalidArgument(
            "all parameter vectors are identical".into(),
        ));
    }
    // The perplexity search is scale-free; unit scale keeps exponents tame.
    d2.iter_mut().flatten().for_each(|d| *d /= max);

    let conditional: Vec<Vec<f64>> = (0..t)
        .map(|i| conditional_row(&d2[i], i, perplexity))
        .collect();
    let p: Vec<Vec<f64>> = (0..t)
        .map(|i| {
            (0..t)
                .map(|j| {
                    if i == j {
                        0.0
                    } else {
                        ((conditional[i][j] + conditional[j][i]) / (2.0 * t as f64)).max(TINY)
                    }
                })
                .collect()
        })
        .collect();

    let learning_rate = config
        .learning_rate
        .unwrap_or_else(|| (t as f64 / config.early_exaggeration / 4.0).max(50.0));
    let mut r = rng::derive(config.seed, &[STREAM_TSNE]);
    let normal = Normal::new(0.0, 1e-4).expect("valid normal");
    let mut y: Vec<[f64; 2]> = (0..t)
        .map(|_| [normal.sample(&mut r), normal.sample(&mut r)])
        .collect();
    let mut update = vec![[0.0; 2]; t];
    let mut gains = vec![[1.0f64; 2]; t];
    let mut trace = Vec::with_capacity(config.iterations);
    let mut num = vec![vec![0.0; t]; t];
    let mut q_sum = student_t(&y, &mut num);

    for iter in 0..config.iterations {
        let early = iter < config.exaggeration_iterations;
        let exaggeration = if early {
            config.early_exaggeration
        } else {
            1.0
        };
        let momentum = if early { 0.5 } else { 0.8 };
        let grad = gradient(&p, &num, q_sum, &y, exaggeration);
        for i in 0..t {
            for a in 0..2 {
                let g = gains[i][a];
                let g = if (grad[i][a] > 0.0) != (update[i][a] > 0.0) {
                    g + 0.2
                } else {
                    g * 0.8
                };
                gains[i][a] = g.max(MIN_GAIN);
                update[i][a] = momentum * update[i][a] - learning_rate * gains[i][a] * grad[i][a];
            }
        }
        let candidate = shifted(&y, &update, 1.0);
        let mut cand_num = vec![vec![0.0; t]; t];
        let cand_sum = student_t(&candidate, &mut cand_num);
        let cand_kl = kl_divergence(&p, &cand_num, cand_sum);
        if early || trace.last().is_none_or(|&last| cand_kl <= last) {
            (y, num, q_sum) = (candidate, cand_num, cand_sum);
            trace.push(cand_kl);
            continue;
        }
        // Without exaggeration the objective must not rise: drop the momentum
        // and backtrack along the plain gradient.
        let last = *trace.last().expect("checked above");
        update.iter_mut().for_each(|u| *u = [0.0; 2]);
        gains.iter_mut().for_each(|g| *g = [1.0; 2]);
        let descent: Vec<[f64; 2]> = grad.iter().map(|g| [-g[0], -g[1]]).collect();
        let mut step = learning_rate;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = shifted(&y, &descent, step);
            let mut trial_num = vec![vec![0.0; t]; t];
            let trial_sum = student_t(&trial, &mut trial_num);
            let kl = kl_divergence(&p, &trial_num, trial_sum);
            if kl <= last {
                accepted = Some((trial, trial_num, trial_sum, kl));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((trial, trial_num, trial_sum, kl)) => {
                (y, num, q_sum) = (trial, trial_num, trial_sum);
                trace.push(kl);
            }
            None => trace.push(last),
        }
    }
    if y.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("t-SNE embedding"));
    }
    Ok(Projection2D {
        points: y,
        member_ids: matrix.member_ids().to_vec(),
        method: ProjectionMethod::Tsne,
        seed: Some(config.seed),
        labels: None,
        objective_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    fn clustered(seed: u64) -> (ParamMatrix, Vec<usize>) {
        let mut r = crate::rng::seeded(seed);
        let centers: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..40).map(|_| r.random_range(-10.0..10.0)).collect())
            .collect();
        let rows = (0..30).map(|i| (i, centers[i % 3].clone())).collect();
        (
            ParamMatrix::from_rows(rows).unwrap(),
            (0..30).map(|i| i % 3).collect(),
        )
    }

    fn purity(points: &[[f64; 2]], labels: &[usize]) -> f64 {
        let hits = (0..points.len())
            .filter(|&i| {
                let nn = (0..points.len())
                    .filter(|&j| j != i)
                    .min_by(|&a, &b| {
                        let da = (points[a][0] - points[i][0]).powi(2)
                            + (points[a][1] - points[i][1]).powi(2);
                        let db = (points[b][0] - points[i][0]).powi(2)
                            + (points[b][1] - points[i][1]).powi(2);
                        da.total_cmp(&db)
                    })
                    .unwrap();
                labels[nn] == labels[i]
            })
            .count();
        hits as f64 / points.len() as f64
    }

    #[test]
    fn conditional_row_hits_perplexity() {
        let d2: Vec<f64> = (0..20)
            .map(|j| (j as f64 * 0.37).sin().abs() + 0.01 * j as f64)
            .collect();
        let p = conditional_row(&d2, 3, 5.0);
        assert_eq!(p[3], 0.0);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let h: f64 = -p
            .iter()
            .filter(|&&v| v > 0.0)
            .map(|v| v * v.ln())
            .sum::<f64>();
        assert!((h.exp() - 5.0).abs() < 1e-6);
    }

    #[test]
    fn clusters_stay_pure() {
        for seed in [0, 1, 2] {
            let (m, labels) = clustered(4);
            let proj = tsne_project(
                &m,
                &TsneConfig {
                    seed,
                    ..Default::default()
                },
            )
            .unwrap();
            assert_eq!(proj.points.len(), 30);
            assert!(proj.points.iter().flatten().all(|v| v.is_finite()));
            assert!(purity(&proj.points, &labels) >= 0.9);
        }
    }

    #[test]
    fn objective_tail_is_monotone() {
        let mut r = crate::rng::seeded(5);
        let rows = (0..25)
            .map(|i| (i, (0..10).map(|_| r.random_range(-1.0..1.0)).collect()))
            .collect();
        let m = ParamMatrix::from_rows(rows).unwrap();
        let proj = tsne_project(&m, &TsneConfig::default()).unwrap();
        let trace = &proj.objective_trace;
        assert_eq!(trace.len(), 1000);
        for w in trace[trace.len() / 2..].windows(2) {
            assert!(w[1] <= w[0] + 1e-6, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn same_seed_is_bit_reproducible() {
        let (m, _) = clustered(6);
        let config = TsneConfig {
            iterations: 300,
            seed: 9,
            ..Default::default()
        };
        assert_eq!(
            tsne_project(&m, &config).unwrap(),
            tsne_project(&m, &config).unwrap()
        );
    }

    #[test]
    fn rejects_degenerate_inputs() {
        let same = ParamMatrix::from_rows((0..6).map(|i| (i, vec![1.0, 2.0])).collect()).unwrap();
        assert!(tsne_project(&same, &TsneConfig::default()).is_err());
        let few = ParamMatrix::from_rows((0..3).map(|i| (i, vec![i as f64])).collect()).unwrap();
        assert!(tsne_project(&few, &TsneConfig::default()).is_err());
        let (m, _) = clustered(7);
        let wide = TsneConfig {
            perplexity: Some(40.0),
            ..Default::default()
        };
        assert!(tsne_project(&m, &wide).is_err());
    }
}
