use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use meta_inr::analysis::{tsne_project, ParamMatrix, TsneConfig};
use meta_inr::metrics::{chamfer, marching_cubes};
use meta_inr::nn::{backward, forward, init_siren, Schema};
use meta_inr::synthetic::{gaussian_blob, sphere_sdf};
use meta_inr::volume::sample_batch;

fn network(c: &mut Criterion) {
    let schema = Schema::default();
    let params = init_siren::<f32>(&schema, 0);
    let volume = gaussian_blob([32; 3], [15.5; 3], 4.0).normalize();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (inputs, targets) = sample_batch(&volume, 4096, &mut rng)
        .unwrap()
        .to_real::<f32>();
    let mut group = c.benchmark_group("siren_256x7_batch4096");
    group.sample_size(10);
    group.bench_function("forward", |b| {
        b.iter(|| forward(&params, black_box(&inputs)).unwrap())
    });
    group.bench_function("forward_backward", |b| {
        b.iter(|| backward(&params, black_box(&inputs), black_box(&targets)).unwrap())
    });
    group.finish();
}

fn geometry(c: &mut Criterion) {
    let sdf = sphere_sdf([64; 3], [31.5; 3], 20.0);
    c.bench_function("marching_cubes_64", |b| {
        b.iter(|| marching_cubes(black_box(&sdf), 0.0).unwrap())
    });

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut cloud = |n: usize| -> Vec<[f64; 3]> {
        (0..n)
            .map(|_| [rng.random(), rng.random(), rng.random()])
            .collect()
    };
    let (a, b) = (cloud(20_000), cloud(20_000));
    c.bench_function("chamfer_20k", |bench| {
        bench.iter(|| chamfer(black_box(&a), black_box(&b)).unwrap())
    });
}

fn projection(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let rows = (0..60)
        .map(|t| (t, (0..512).map(|_| rng.random::<f64>()).collect()))
        .collect();
    let matrix = ParamMatrix::from_rows(rows).unwrap();
    let config = TsneConfig {
        iterations: 300,
        ..Default::default()
    };
    let mut group = c.benchmark_group("tsne");
    group.sample_size(10);
    group.bench_function("exact_60x512", |b| {
        b.iter(|| tsne_project(black_box(&matrix), &config).unwrap())
    });
    group.finish();
}

criterion_group!(benches, network, geometry, projection);
criterion_main!(benches);
