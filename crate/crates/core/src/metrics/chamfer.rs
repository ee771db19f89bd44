use rayon::prelude::*;

use crate::{Error, Result};

const LEAF_SIZE: usize = 8;

enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

/// Static 3-D kd-tree for exact nearest-neighbor distance queries.
pub struct KdTree {
    points: Vec<[f64; 3]>,
    root: Node,
}

impl KdTree {
    pub fn new(points: &[[f64; 3]]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("point set"));
        }
        if points.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("point coordinates"));
        }
        let mut points = points.to_vec();
        let len = points.len();
        let root = build(&mut points, 0, len);
        Ok(Self { points, root })
    }

    /// Euclidean distance from `q` to the closest stored point.
    pub fn nearest_distance(&self, q: [f64; 3]) -> f64 {
        let mut best = f64::INFINITY;
        self.search(&self.root, q, &mut best);
        best.sqrt()
    }

    fn search(&self, node: &Node, q: [f64; 3], best: &mut f64) {
        match node {
            Node::Leaf { start, end } => {
                for p in &self.points[*start..*end] {
                    let d = dist2(*p, q);
                    if d < *best {
                        *best = d;
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let delta = q[*axis] - value;
                let (near, far) = if delta < 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search(near, q, best);
                if delta * delta <= *best {
                    self.search(far, q, best);
                }
            }
        }
    }
}

fn build(points: &mut [[f64; 3]], start: usize, end: usize) -> Node {
    let slice = &mut points[start..end];
    if slice.len() <= LEAF_SIZE {
        return Node::Leaf { start, end };
    }
    let axis = (0..3)
        .max_by(|&a, &b| spread(slice, a).total_cmp(&spread(slice, b)))
        .unwrap_or(0);
    if spread(slice, axis) == 0.0 {
        return Node::Leaf { start, end };
    }
    let mid = slice.len() / 2;
    slice.select_nth_unstable_by(mid, |p, q| p[axis].total_cmp(&q[axis]));
    let value = slice[mid][axis];
    Node::Split {
        axis,
        value,
        left: Box::new(build(points, start, start + mid)),
        right: Box::new(build(points, start + mid, end)),
    }
}

fn spread(points: &[[f64; 3]], axis: usize) -> f64 {
    let (lo, hi) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p[axis]), hi.max(p[axis]))
        });
    hi - lo
}

#[inline]
fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).powi(2)).sum()
}

fn mean_nearest(from: &[[f64; 3]], to: &KdTree) -> f64 {
    let d: Vec<f64> = from.par_iter().map(|&p| to.nearest_distance(p)).collect();
    d.iter().sum::<f64>() / d.len() as f64
}

/// Symmetric Chamfer distance: the average of the two mean nearest-neighbor
/// distances between the sets.
pub fn chamfer(a: &[[f64; 3]], b: &[[f64; 3]]) -> Result<f64> {
    let (ta, tb) = (KdTree::new(a)?, KdTree::new(b)?);
    Ok(0.5 * (mean_nearest(a, &tb) + mean_nearest(b, &ta)))
}

/// O(|a|·|b|) reference implementation.
pub fn chamfer_brute_force(a: &[[f64; 3]], b: &[[f64; 3]]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("point set"));
    }
    let one_way = |from: &[[f64; 3]], to: &[[f64; 3]]| {
        from.iter()
            .map(|&p| {
                to.iter()
                    .map(|&q| dist2(p, q))
                    .fold(f64::INFINITY, f64::min)
                    .sqrt()
            })
            .sum::<f64>()
            / from.len() as f64
    };
    Ok(0.5 * (one_way(a, b) + one_way(b, a)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cloud(n: usize, seed: u64) -> Vec<[f64; 3]> {
        let mut r = crate::rng::seeded(seed);
        (0..n)
            .map(|_| std::array::from_fn(|_| r.random_range(-5.0..5.0)))
            .collect()
    }

    #[test]
    fn identical_sets_are_zero() {
        let a = cloud(50, 1);
        assert_eq!(chamfer(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn single_points() {
        assert_eq!(chamfer(&[[0.0; 3]], &[[3.0, 0.0, 0.0]]).unwrap(), 3.0);
    }

    #[test]
    fn empty_set_is_error() {
        assert!(chamfer(&[], &[[0.0; 3]]).is_err());
        assert!(chamfer(&[[0.0; 3]], &[]).is_err());
    }

    #[test]
    fn matches_brute_force_on_random_clouds() {
        let (a, b) = (cloud(200, 2), cloud(200, 3));
        let fast = chamfer(&a, &b).unwrap();
        let slow = chamfer_brute_force(&a, &b).unwrap();
        assert!((fast - slow).abs() < 1e-9);
    }

    #[test]
    fn handles_duplicate_points() {
        let a = vec![[1.0, 1.0, 1.0]; 40];
        let b = cloud(30, 4);
        let fast = chamfer(&a, &b).unwrap();
        assert!((fast - chamfer_brute_force(&a, &b).unwrap()).abs() < 1e-12);
    }

    fn points() -> impl Strategy<Value = Vec<[f64; 3]>> {
        prop::collection::vec(prop::array::uniform3(-10.0..10.0f64), 1..500)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn kd_tree_equals_brute_force(a in points(), b in points()) {
            let fast = chamfer(&a, &b).unwrap();
            let slow = chamfer_brute_force(&a, &b).unwrap();
            prop_assert!((fast - slow).abs() <= 1e-9 * slow.max(1.0));
        }

        #[test]
        fn symmetric_and_scale_linear(a in points(), b in points(), s in 0.1..10.0f64) {
            let ab = chamfer(&a, &b).unwrap();
            prop_assert!((ab - chamfer(&b, &a).unwrap()).abs() <= 1e-12 * ab.max(1.0));
            let scale = |v: &[[f64; 3]]| v.iter().map(|p| p.map(|c| c * s)).collect::<Vec<_>>();
            let scaled = chamfer(&scale(&a), &scale(&b)).unwrap();
            prop_assert!((scaled - s * ab).abs() <= 1e-9 * (s * ab).max(1.0));
        }
    }
}
