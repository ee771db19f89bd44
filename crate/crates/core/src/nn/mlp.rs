use rayon::prelude::*;

use super::{GradientVector, MlpParameters, Real};
use crate::{Error, Result};

/// Rows per work item. Fixed so reductions never depend on the thread count.
pub const CHUNK_ROWS: usize = 1024;

/// Chunks evaluated concurrently before their gradients are folded in.
const CHUNKS_PER_ROUND: usize = 16;

/// `c (m×n) ← a (m×k) · wᵀ` where `w` is `n×k` row-major.
fn matmul_a_wt<T: Real>(a: &[T], w: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    assert!(a.len() >= m * k && w.len() >= n * k && c.len() >= m * n);
    // SAFETY: bounds asserted above; all three operands are dense row-major.
    unsafe {
        T::gemm(
            m,
            k,
            n,
            T::one(),
            a.as_ptr(),
            k as isize,
            1,
            w.as_ptr(),
            1,
            k as isize,
            T::zero(),
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `c (m×n) ← a (m×k) · w (k×n)`, all row-major.
fn matmul_a_w<T: Real>(a: &[T], w: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    assert!(a.len() >= m * k && w.len() >= k * n && c.len() >= m * n);
    // SAFETY: bounds asserted above.
    unsafe {
        T::gemm(
            m,
            k,
            n,
            T::one(),
            a.as_ptr(),
            k as isize,
            1,
            w.as_ptr(),
            n as isize,
            1,
            T::zero(),
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `c (m×n) += aᵀ · b` where `a` is `rows×m` and `b` is `rows×n`.
fn matmul_at_b_acc<T: Real>(a: &[T], b: &[T], c: &mut [T], rows: usize, m: usize, n: usize) {
    assert!(a.len() >= rows * m && b.len() >= rows * n && c.len() >= m * n);
    // SAFETY: bounds asserted above; aᵀ is read through swapped strides.
    unsafe {
        T::gemm(
            m,
            rows,
            n,
            T::one(),
            a.as_ptr(),
            1,
            m as isize,
            b.as_ptr(),
            n as isize,
            1,
            T::one(),
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Activations kept from a forward pass over one chunk.
struct Trace<T> {
    /// `acts[0]` is the input, `acts[l + 1]` the output of layer `l`.
    acts: Vec<Vec<T>>,
    /// `ω·cos(ω·z)` for every sine layer, empty for affine ones.
    slopes: Vec<Vec<T>>,
}

fn forward_chunk<T: Real>(
    params: &MlpParameters<T>,
    input: &[T],
    rows: usize,
    keep: bool,
) -> Trace<T> {
    let layers = params.schema().layers();
    let mut acts = Vec::with_capacity(layers.len() + 1);
    let mut slopes = Vec::with_capacity(layers.len());
    acts.push(input.to_vec());
    for (l, layer) in layers.iter().enumerate() {
        let view = params.layer(l);
        let mut z = vec![T::zero(); rows * layer.out_dim];
        matmul_a_wt(
            &acts[l],
            view.weights,
            &mut z,
            rows,
            layer.in_dim,
            layer.out_dim,
        );
        for row in z.chunks_exact_mut(layer.out_dim) {
            for (v, b) in row.iter_mut().zip(view.bias) {
                *v = *v + *b;
            }
        }
        if layer.has_sine {
            let omega = T::of(layer.omega);
            let mut slope = if keep {
                Vec::with_capacity(z.len())
            } else {
                Vec::new()
            };
            for v in z.iter_mut() {
                let (s, c) = (omega * *v).sin_cos();
                *v = s;
                if keep {
                    slope.push(omega * c);
                }
            }
            slopes.push(slope);
        } else {
            slopes.push(Vec::new());
        }
        if !keep && l > 0 {
            acts[l] = Vec::new();
        }
        acts.push(z);
    }
    Trace { acts, slopes }
}

/// Squared-error sum and gradient for one chunk, with `dL/dŷ = scale·(ŷ − y)`.
fn chunk_gradient<T: Real>(
    params: &MlpParameters<T>,
    input: &[T],
    targets: &[T],
    rows: usize,
    scale: T,
) -> (f64, Vec<T>) {
    let schema = params.schema();
    let layers = schema.layers();
    let offsets = schema.offsets();
    let Trace { acts, slopes } = forward_chunk(params, input, rows, true);

    let output = &acts[layers.len()];
    let mut sq = 0.0f64;
    let mut delta: Vec<T> = output
        .iter()
        .zip(targets)
        .map(|(y_hat, y)| {
            let r = *y_hat - *y;
            sq += r.f64() * r.f64();
            scale * r
        })
        .collect();

    let mut grad = vec![T::zero(); schema.param_count()];
    for l in (0..layers.len()).rev() {
        let layer = &layers[l];
        let (w_off, b_off) = (offsets[l], offsets[l] + layer.in_dim * layer.out_dim);
        matmul_at_b_acc(
            &delta,
            &acts[l],
            &mut grad[w_off..b_off],
            rows,
            layer.out_dim,
            layer.in_dim,
        );
        let db = &mut grad[b_off..b_off + layer.out_dim];
        for row in delta.chunks_exact(layer.out_dim) {
            for (g, d) in db.iter_mut().zip(row) {
                *g = *g + *d;
            }
        }
        if l > 0 {
            let mut upstream = vec![T::zero(); rows * layer.in_dim];
            matmul_a_w(
                &delta,
                params.layer(l).weights,
                &mut upstream,
                rows,
                layer.out_dim,
                layer.in_dim,
            );
            for (u, s) in upstream.iter_mut().zip(&slopes[l - 1]) {
                *u = *u * *s;
            }
            delta = upstream;
        }
    }
    (sq, grad)
}

fn check_inputs<T: Real>(params: &MlpParameters<T>, inputs: &[T]) -> Result<usize> {
    let width = params.schema().in_dim();
    if inputs.len() % width != 0 {
        return Err(Error::InvalidArgument(format!(
            "input length {} is not a multiple of the input width {width}",
            inputs.len()
        )));
    }
    if inputs.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("network input"));
    }
    Ok(inputs.len() / width)
}

/// Evaluates the network on `inputs`, a row-major `N × in_dim` buffer.
///
/// Rows are processed in fixed-size chunks, possibly in parallel; every output
/// row depends only on its own input row.
pub fn forward<T: Real>(params: &MlpParameters<T>, inputs: &[T]) -> Result<Vec<T>> {
    check_inputs(params, inputs)?;
    let width = params.schema().in_dim();
    let out_dim = params.schema().out_dim();
    let parts: Vec<Vec<T>> = inputs
        .par_chunks(CHUNK_ROWS * width)
        .map(|chunk| {
            let rows = chunk.len() / width;
            let mut trace = forward_chunk(params, chunk, rows, false);
            trace.acts.pop().expect("output layer")
        })
        .collect();
    let mut out = Vec::with_capacity(inputs.len() / width * out_dim);
    for part in parts {
        out.extend(part);
    }
    Ok(out)
}

/// [`forward`] for 3-D coordinates.
pub fn forward_coords<T: Real>(params: &MlpParameters<T>, coords: &[[T; 3]]) -> Result<Vec<T>> {
    forward(params, coords.as_flattened())
}

/// Mean squared error of the network on a batch, without gradients.
pub fn mse_loss<T: Real>(params: &MlpParameters<T>, inputs: &[T], targets: &[T]) -> Result<f64> {
    let out = forward(params, inputs)?;
    Error::check_len(out.len(), targets.len())?;
    if out.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let sq: f64 = out
        .iter()
        .zip(targets)
        .map(|(a, b)| {
            let r = a.f64() - b.f64();
            r * r
        })
        .sum();
    Ok(sq / out.len() as f64)
}

/// Mean squared error over the batch and its exact gradient.
///
/// `inputs` is row-major `N × in_dim`; `targets` is `N × out_dim`. Chunk
/// gradients are summed in chunk order, so the result is bit-reproducible for
/// any number of worker threads.
pub fn backward<T: Real>(
    params: &MlpParameters<T>,
    inputs: &[T],
    targets: &[T],
) -> Result<(f64, GradientVector<T>)> {
    let rows = check_inputs(params, inputs)?;
    if rows == 0 {
        return Err(Error::Empty("batch"));
    }
    let width = params.schema().in_dim();
    let out_dim = params.schema().out_dim();
    Error::check_len(rows * out_dim, targets.len())?;
    if targets.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("targets"));
    }

    let count = rows * out_dim;
    let scale = T::of(2.0 / count as f64);
    let chunks: Vec<(&[T], &[T])> = inputs
        .chunks(CHUNK_ROWS * width)
        .zip(targets.chunks(CHUNK_ROWS * out_dim))
        .collect();

    let mut sq_total = 0.0;
    let mut grad = GradientVector::zeros(params.len());
    for round in chunks.chunks(CHUNKS_PER_ROUND) {
        let parts: Vec<(f64, Vec<T>)> = round
            .par_iter()
            .map(|(x, y)| chunk_gradient(params, x, y, x.len() / width, scale))
            .collect();
        for (sq, g) in parts {
            sq_total += sq;
            grad.add_assign(&GradientVector(g))?;
        }
    }
    Ok((sq_total / count as f64, grad))
}
