//! Acceptance suite: one PASS/FAIL line per numbered criterion.
//!
//! Run with `cargo test -p meta-inr-cli --test acceptance -- --nocapture`
//! (output is printed either way). Exit status is nonzero if any numbered
//! criterion fails; SUPPLEMENTARY lines are reported but never change it.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use meta_inr::analysis::{
    matrix_path, mean_step_distance, smoothness_score, tsne_project, ParamMatrix, TsneConfig,
};
use meta_inr::metrics::{
    chamfer, chamfer_brute_force, evaluate_member, marching_cubes, EvalOptions,
};
use meta_inr::nn::{backward, forward_coords, init_siren, mse_loss, OptimizerKind, Schema};
use meta_inr::synthetic::{moving_blob_sequence, sphere_sdf};
use meta_inr::training::{
    encode_members, finetune_volume, meta_pretrain, meta_rng, pretrain_vanilla, train_scratch,
    train_scratch_until, AdaptedModelSet, FinetuneConfig, MetaConfig, Schedule, ScratchConfig,
};
use meta_inr::volume::{retained_fraction, sample_batch, subsample_dataset, InMemoryDataset};
use meta_inr::{MlpParameters, Volume, VolumeSource};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Runs one check, timing it and converting panics into failures.
fn run(label: &str, limit: Option<Duration>, check: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(check));
    let elapsed = start.elapsed();
    let (mut pass, mut detail) = match result {
        Ok(o) => (o.pass, o.detail),
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        }
    };
    if let Some(limit) = limit {
        if elapsed > limit {
            pass = false;
            detail.push_str(&format!("; over the {} s budget", limit.as_secs()));
        }
    }
    println!(
        "{} {label}: {detail} [{:.1} s]",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    pass
}

// ---------------------------------------------------------------- criterion 1

fn gradient_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for net in 0..20u64 {
        let width = rng.random_range(2..=32);
        let params = init_siren::<f64>(&Schema::coordinate_net(width, 7).unwrap(), net);
        let x: Vec<f64> = (0..48).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, grad) = backward(&params, &x, &y).unwrap();
        let mut probe = params.clone();
        let numeric: Vec<f64> = (0..params.len())
            .map(|i| {
                let base = params.as_slice()[i];
                probe.as_mut_slice()[i] = base + h;
                let plus = mse_loss(&probe, &x, &y).unwrap();
                probe.as_mut_slice()[i] = base - h;
                let minus = mse_loss(&probe, &x, &y).unwrap();
                probe.as_mut_slice()[i] = base;
                (plus - minus) / (2.0 * h)
            })
            .collect();
        let scale = numeric.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in grad.as_slice().iter().zip(&numeric) {
            worst = worst.max((a - b).abs() / a.abs().max(b.abs()).max(scale));
        }
        checked += params.len();
    }
    outcome(
        worst < 1e-5,
        format!(
            "worst relative error {worst:.2e} over {checked} parameters in 20 nets (limit 1e-5)"
        ),
    )
}

// ---------------------------------------------------------------- criterion 2

fn reptile_identity() -> Outcome {
    let volume = moving_blob_sequence([8, 8, 8], 1, 2.0)
        .remove(0)
        .normalize();
    let source = InMemoryDataset::new("one", vec![volume.clone()]).unwrap();
    let config = MetaConfig {
        spatial_stride: 1,
        temporal_stride: 1,
        inner_lr: 3e-3,
        outer_lr: 0.6,
        inner_steps: 1,
        outer_steps: 1,
        batch_size: 128,
        seed: 5,
        network: Schema::coordinate_net(24, 5).unwrap(),
    };
    let updated = meta_pretrain::<f64, _>(&source, &config).unwrap().params;
    let theta = init_siren::<f64>(&config.network, config.seed);
    let (x, y) = sample_batch(&volume, config.batch_size, &mut meta_rng(config.seed, 0, 0))
        .unwrap()
        .to_real::<f64>();
    let (_, grad) = backward(&theta, &x, &y).unwrap();
    let ba = config.outer_lr * config.inner_lr;
    let worst = updated
        .as_slice()
        .iter()
        .zip(theta.as_slice())
        .zip(grad.as_slice())
        .map(|((new, old), g)| ((new - old) - (-ba * g)).abs())
        .fold(0.0f64, f64::max);
    outcome(
        worst < 1e-12,
        format!("max |Δθ_m + βα∇L| = {worst:.2e} (limit 1e-12)"),
    )
}

// ---------------------------------------------------------------- criterion 3

fn subsampling_budget() -> Outcome {
    let dims = [16, 12, 8];
    let vols: Vec<Volume> = moving_blob_sequence(dims, 6, 2.0);
    let source = InMemoryDataset::new("budget", vols).unwrap();
    let kept: usize = subsample_dataset(&source, 4, 2)
        .unwrap()
        .iter()
        .map(|(v, _)| v.len())
        .sum();
    let total = 16 * 12 * 8 * 6;
    let formula = retained_fraction(dims, 6, 4, 2);
    let exact = kept * 128 == total && formula == 1.0 / 128.0;
    outcome(
        exact,
        format!(
            "kept {kept} of {total} samples = {:.4}% (1/128 = 0.78125%)",
            100.0 * kept as f64 / total as f64
        ),
    )
}

// ---------------------------------------------------------- criteria 4 and 7

const SUITE_DIMS: [usize; 3] = [32, 32, 32];
const SUITE_MEMBERS: usize = 8;
const SUITE_ISO: f64 = 0.5;

struct Suite {
    raw: Vec<Volume>,
    source: InMemoryDataset,
    network: Schema,
    finetune: FinetuneConfig,
    meta_init: MlpParameters<f32>,
    vanilla_init: MlpParameters<f32>,
    random_init: MlpParameters<f32>,
    meta_seconds: f64,
}

impl Suite {
    fn build() -> Self {
        let raw = moving_blob_sequence(SUITE_DIMS, SUITE_MEMBERS, 4.0);
        let source = InMemoryDataset::new("moving-blob", raw.clone()).unwrap();
        let network = Schema::coordinate_net(32, 5).unwrap();
        let meta_config = MetaConfig {
            spatial_stride: 2,
            temporal_stride: 2,
            inner_lr: 1e-2,
            outer_lr: 1.0,
            inner_steps: 16,
            outer_steps: 100,
            batch_size: 2048,
            seed: 1,
            network: network.clone(),
        };
        let start = Instant::now();
        let meta_init = meta_pretrain::<f32, _>(&source, &meta_config)
            .unwrap()
            .params;
        let meta_seconds = start.elapsed().as_secs_f64();
        let vanilla_init = pretrain_vanilla::<f32, _>(&source, &meta_config)
            .unwrap()
            .params;
        let random_init = init_siren::<f32>(&network, 1);
        let finetune = FinetuneConfig {
            lr: 1e-5,
            k: 16,
            batch_size: 1024,
            seed: 3,
            schedule: Schedule::Epochs,
            optimizer: OptimizerKind::Sgd,
        };
        Self {
            raw,
            source,
            network,
            finetune,
            meta_init,
            vanilla_init,
            random_init,
            meta_seconds,
        }
    }

    fn members(&self) -> Vec<usize> {
        (0..SUITE_MEMBERS).collect()
    }

    fn finetune_from(
        &self,
        init: &MlpParameters<f32>,
        config: &FinetuneConfig,
    ) -> AdaptedModelSet<f32> {
        let report = encode_members(&self.source, &self.members(), |v| {
            finetune_volume(init, v, config)
        });
        assert!(report.failures.is_empty());
        report.models
    }

    fn scratch_config(&self) -> ScratchConfig {
        ScratchConfig {
            steps: self.finetune.step_count(SUITE_DIMS.iter().product()),
            optimizer: OptimizerKind::Adam,
            lr: 1e-4,
            batch_size: self.finetune.batch_size,
            seed: self.finetune.seed,
            network: self.network.clone(),
        }
    }

    /// Mean PSNR (dB) and mean Chamfer distance (voxels) against the raw members.
    fn quality(&self, models: &AdaptedModelSet<f32>) -> (Vec<f64>, f64) {
        let mut psnrs = Vec::new();
        let mut cds = Vec::new();
        for m in &models.models {
            let r = evaluate_member(
                m.member_index,
                &m.params,
                &self.raw[m.member_index],
                SUITE_ISO,
                EvalOptions::default(),
            )
            .unwrap();
            psnrs.push(r.psnr_db);
            cds.extend(r.chamfer);
        }
        (psnrs, mean(&cds))
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

struct SuiteResults {
    meta: AdaptedModelSet<f32>,
    meta_psnr: Vec<f64>,
}

fn meta_advantage(suite: &Suite, keep: &mut Option<SuiteResults>) -> Outcome {
    let meta = suite.finetune_from(&suite.meta_init, &suite.finetune);
    let random = suite.finetune_from(&suite.random_init, &suite.finetune);
    let vanilla = suite.finetune_from(&suite.vanilla_init, &suite.finetune);
    let (meta_psnr, meta_cd) = suite.quality(&meta);
    let (random_psnr, random_cd) = suite.quality(&random);
    let (vanilla_psnr, vanilla_cd) = suite.quality(&vanilla);
    let (m, r, v) = (mean(&meta_psnr), mean(&random_psnr), mean(&vanilla_psnr));
    *keep = Some(SuiteResults { meta, meta_psnr });
    outcome(
        m >= r + 3.0 && m > v,
        format!(
            "mean PSNR meta {m:.2} dB, random-init {r:.2} dB (margin {:.2}, need ≥ 3), vanilla-init {v:.2} dB; \
             mean CD meta {meta_cd:.3}, random {random_cd:.3}, vanilla {vanilla_cd:.3} voxels; \
             meta-pretraining took {:.1} s; full ordering meta > random > vanilla {}",
            m - r,
            suite.meta_seconds,
            if m > r && r > v { "holds" } else { "does not hold (random-init below vanilla)" }
        ),
    )
}

fn trajectory_smoothness(suite: &Suite, results: &SuiteResults) -> Outcome {
    let config = suite.scratch_config();
    let report = encode_members(&suite.source, &suite.members(), |v| {
        train_scratch::<f32>(v, &config)
    });
    assert!(report.failures.is_empty());
    let meta = ParamMatrix::from_models(&results.meta).unwrap();
    let scratch = ParamMatrix::from_models(&report.models).unwrap();
    let step = |m: &ParamMatrix| mean_step_distance(&matrix_path(m)).unwrap();
    let turn = |m: &ParamMatrix| smoothness_score(&matrix_path(m)).unwrap();
    let (ms, ss, mt, st) = (step(&meta), step(&scratch), turn(&meta), turn(&scratch));
    outcome(
        ms < ss && mt < st,
        format!(
            "mean step distance meta {ms:.4} vs scratch {ss:.4}; mean turning angle meta {mt:.4} vs scratch {st:.4} rad \
             (scratch: Adam lr 1e-4, {} steps)",
            config.steps
        ),
    )
}

fn psnr_of(params: &MlpParameters<f32>, volume: &Volume) -> f64 {
    let out = forward_coords(params, &volume.coords()).unwrap();
    let mse = out
        .iter()
        .zip(volume.data())
        .map(|(a, b)| ((a - b) as f64).powi(2))
        .sum::<f64>()
        / volume.len() as f64;
    10.0 * (4.0 / mse).log10()
}

/// Total encode time against the time scratch training needs to match each
/// member's finetuned PSNR (Adam lr 1e-4, checked every 16 steps).
fn encode_time_experiment(
    suite: &Suite,
    meta: &AdaptedModelSet<f32>,
    targets: &[f64],
) -> (f64, f64, usize) {
    let encode: f64 = meta.models.iter().map(|m| m.encode_seconds).sum();
    let config = ScratchConfig {
        steps: 8192,
        ..suite.scratch_config()
    };
    let mut scratch = 0.0;
    let mut unreached = 0;
    for (index, target) in targets.iter().enumerate() {
        let volume = suite.source.load(index).unwrap().normalize();
        let mut reached = false;
        let fit = train_scratch_until::<f32, _>(&volume, &config, |step, p| {
            reached = step % 16 == 0 && psnr_of(p, &volume) >= *target;
            reached
        })
        .unwrap();
        scratch += fit.seconds;
        unreached += usize::from(!reached);
    }
    (encode, scratch, unreached)
}

fn encode_time_line(label: &str, encode: f64, scratch: f64, unreached: usize, target: f64) {
    println!(
        "SUPPLEMENTARY {} {label}: total encode {encode:.2} s vs scratch-to-equal-PSNR {scratch:.2} s \
         (target mean {target:.2} dB, {unreached} members hit the 8192-step cap)",
        if encode < scratch { "PASS" } else { "FAIL" },
    );
}

// ---------------------------------------------------------------- criterion 5

fn chamfer_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let spread = rng.random_range(0.1..100.0);
        let cloud = |rng: &mut ChaCha8Rng| -> Vec<[f64; 3]> {
            let n = rng.random_range(1..=500);
            (0..n)
                .map(|_| std::array::from_fn(|_| rng.random_range(-spread..spread)))
                .collect()
        };
        let (a, b) = (cloud(&mut rng), cloud(&mut rng));
        worst = worst.max((chamfer(&a, &b).unwrap() - chamfer_brute_force(&a, &b).unwrap()).abs());
    }
    outcome(
        worst < 1e-9,
        format!("max |kd-tree − brute force| = {worst:.2e} over 50 instances"),
    )
}

// ---------------------------------------------------------------- criterion 6

fn trilinear(volume: &Volume, p: [f64; 3]) -> f64 {
    let dims = volume.dims();
    let base: [usize; 3] = std::array::from_fn(|a| (p[a].floor() as usize).min(dims[a] - 2));
    let t: [f64; 3] = std::array::from_fn(|a| p[a] - base[a] as f64);
    let mut value = 0.0;
    for corner in 0..8 {
        let bit = |a: usize| (corner >> a) & 1;
        let w: f64 = (0..3)
            .map(|a| if bit(a) == 1 { t[a] } else { 1.0 - t[a] })
            .product();
        value += w * volume.get(base[0] + bit(0), base[1] + bit(1), base[2] + bit(2)) as f64;
    }
    value
}

fn marching_cubes_geometry() -> Outcome {
    let center = [15.5, 15.5, 15.5];
    let volume = sphere_sdf([32, 32, 32], center, 10.0);
    let mesh = marching_cubes(&volume, 0.0).unwrap();
    let radial = mesh
        .vertices
        .iter()
        .map(|v| {
            ((0..3)
                .map(|a| (v[a] - center[a]).powi(2))
                .sum::<f64>()
                .sqrt()
                - 10.0)
                .abs()
        })
        .fold(0.0f64, f64::max);
    let value = mesh
        .vertices
        .iter()
        .map(|&v| trilinear(&volume, v).abs())
        .fold(0.0f64, f64::max);
    outcome(
        !mesh.vertices.is_empty() && radial < 1.0 && value < 1e-5,
        format!(
            "{} vertices; max |‖v−c‖ − 10| = {radial:.4} voxel, max |f(v) − iso| = {value:.2e}",
            mesh.vertices.len()
        ),
    )
}

// ---------------------------------------------------------------- criterion 8

fn cli(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_meta-inr"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn meta-inr");
    assert!(
        out.status.success(),
        "meta-inr {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn same_files(a: &Path, b: &Path, names: &[String]) -> bool {
    names
        .iter()
        .all(|n| std::fs::read(a.join(n)).unwrap() == std::fs::read(b.join(n)).unwrap())
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = |p: &str| dir.path().join(p).to_str().unwrap().to_string();
    let ds = d("data/synthetic.json");
    cli(&[
        "synth",
        "--out-dir",
        &d("data"),
        "--size",
        "12",
        "--count",
        "6",
    ]);
    let net = ["--width", "16", "--depth", "4"];
    for run in ["a", "b"] {
        let meta = d(&format!("meta_{run}.minr"));
        let mut pretrain = vec!["pretrain", "--dataset", &ds, "--out", &meta, "--seed", "7"];
        pretrain.extend([
            "--lambda-s",
            "2",
            "--outer-steps",
            "10",
            "--batch-size",
            "256",
        ]);
        pretrain.extend(net);
        cli(&pretrain);
        // Different worker counts must not change the result.
        let workers = if run == "a" { "1" } else { "3" };
        let out = d(&format!("enc_{run}"));
        cli(&[
            "encode",
            "--dataset",
            &ds,
            "--meta",
            &meta,
            "--out-dir",
            &out,
            "--seed",
            "7",
            "--batch-size",
            "512",
            "--lr",
            "1e-3",
            "--k",
            "2",
            "--workers",
            workers,
        ]);
        let csv = d(&format!("tsne_{run}.csv"));
        cli(&[
            "project", "--models", &out, "--method", "tsne", "--seed", "1", "--out", &csv,
        ]);
    }
    let meta = std::fs::read(d("meta_a.minr")).unwrap() == std::fs::read(d("meta_b.minr")).unwrap();
    let members: Vec<String> = (0..6).map(|i| format!("member_{i:04}.minr")).collect();
    let encode = same_files(
        &dir.path().join("enc_a"),
        &dir.path().join("enc_b"),
        &members,
    );
    let tsne = std::fs::read(d("tsne_a.csv")).unwrap() == std::fs::read(d("tsne_b.csv")).unwrap();
    outcome(
        meta && encode && tsne,
        format!("pretrain checkpoints identical: {meta}; 6 encoded checkpoints identical (1 vs 3 workers): {encode}; t-SNE CSVs identical: {tsne}"),
    )
}

// ---------------------------------------------------------------- criterion 9

fn tsne_clusters() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let centers: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..64).map(|_| rng.random_range(-5.0..5.0)).collect())
        .collect();
    let labels: Vec<usize> = (0..45).map(|i| i % 3).collect();
    let rows = labels
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            (
                i,
                centers[c]
                    .iter()
                    .map(|x| x + rng.random_range(-1.0..1.0))
                    .collect(),
            )
        })
        .collect();
    let matrix = ParamMatrix::from_rows(rows).unwrap();
    let proj = tsne_project(&matrix, &TsneConfig::default()).unwrap();
    let p = &proj.points;
    let hits = (0..p.len())
        .filter(|&i| {
            let nearest = (0..p.len())
                .filter(|&j| j != i)
                .min_by(|&a, &b| {
                    let d = |j: usize| (p[j][0] - p[i][0]).powi(2) + (p[j][1] - p[i][1]).powi(2);
                    d(a).total_cmp(&d(b))
                })
                .unwrap();
            labels[nearest] == labels[i]
        })
        .count();
    let purity = hits as f64 / p.len() as f64;
    outcome(
        purity >= 0.9,
        format!("1-NN purity {purity:.3} on 3 clusters × 15 points in 64-D"),
    )
}

fn main() {
    let minute = Duration::from_secs(60);
    let mut failed = Vec::new();
    let mut record = |n: usize, ok: bool| {
        if !ok {
            failed.push(n)
        }
    };

    record(
        1,
        run("1 gradient exactness", Some(minute), gradient_exactness),
    );
    record(
        2,
        run("2 reptile analytic identity", None, reptile_identity),
    );
    record(
        3,
        run(
            "3 subsampling budget",
            Some(Duration::from_secs(5)),
            subsampling_budget,
        ),
    );

    let mut suite = None;
    let mut results = None;
    let built = run("4 meta-advantage at desk scale", Some(10 * minute), || {
        let s = Suite::build();
        let o = meta_advantage(&s, &mut results);
        suite = Some(s);
        o
    });
    record(4, built);
    match (&suite, &results) {
        (Some(s), Some(r)) => {
            record(
                7,
                run(
                    "7 parameter-trajectory smoothness",
                    Some(10 * minute),
                    || trajectory_smoothness(s, r),
                ),
            );
        }
        _ => record(
            7,
            run("7 parameter-trajectory smoothness", None, || {
                outcome(false, "criterion 4 artifacts unavailable".into())
            }),
        ),
    }

    record(
        5,
        run(
            "5 chamfer oracle equivalence",
            Some(minute),
            chamfer_equivalence,
        ),
    );
    record(
        6,
        run(
            "6 marching-cubes geometry",
            Some(Duration::from_secs(10)),
            marching_cubes_geometry,
        ),
    );
    record(8, run("8 determinism", None, determinism));
    record(
        9,
        run("9 t-SNE cluster fidelity", Some(minute), tsne_clusters),
    );

    if let (Some(s), Some(r)) = (&suite, &results) {
        let target = mean(&r.meta_psnr);
        let (encode, scratch, unreached) = encode_time_experiment(s, &r.meta, &r.meta_psnr);
        encode_time_line(
            "encode time vs scratch (default SGD finetuning)",
            encode,
            scratch,
            unreached,
            target,
        );

        let adam = FinetuneConfig {
            optimizer: OptimizerKind::Adam,
            ..s.finetune
        };
        let meta_adam = s.finetune_from(&s.meta_init, &adam);
        let (psnr, _) = s.quality(&meta_adam);
        let (encode, scratch, unreached) = encode_time_experiment(s, &meta_adam, &psnr);
        encode_time_line(
            "encode time vs scratch (Adam finetuning, lr 1e-5)",
            encode,
            scratch,
            unreached,
            mean(&psnr),
        );
    }

    failed.sort();
    if failed.is_empty() {
        println!("acceptance: all 9 criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
