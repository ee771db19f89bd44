use std::collections::BTreeSet;
use std::fs::{self, OpenOptions};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use log::{info, warn};

use meta_inr::analysis::{pca_projection, select_timesteps, tsne_project, ParamMatrix, TsneConfig};
use meta_inr::metrics::{
    evaluate_member, marching_cubes, reconstruct_volume, EvalOptions, PsnrPeak,
};
use meta_inr::nn::{OptimizerKind, Schema};
use meta_inr::synthetic::{moving_blob_sequence, sphere_sdf};
use meta_inr::training::{
    encode_members, finetune_volume, meta_pretrain, pretrain_vanilla, train_scratch, AdaptedModel,
    AdaptedModelSet, FinetuneConfig, MetaConfig, Schedule, ScratchConfig,
};
use meta_inr::volume::{denormalize_value, write_raw, Dataset, LabelValue, Labels, VolumeSource};
use meta_inr::MlpParameters;

use crate::args::*;
use crate::checkpoint::Checkpoint;

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Pretrain(a) => pretrain(a),
        Command::Encode(a) => encode(a),
        Command::Reconstruct(a) => reconstruct(a),
        Command::Metrics(a) => metrics(a),
        Command::Project(a) => project(a),
        Command::Select(a) => select(a),
        Command::Synth(a) => synth(a),
    }
}

fn network(args: &NetworkArgs) -> Result<Schema> {
    Ok(Schema::coordinate_net(args.width, args.depth)?)
}

fn open_dataset(path: &Path) -> Result<Dataset> {
    Dataset::open(path).with_context(|| format!("opening dataset {}", path.display()))
}

pub fn member_file(index: usize) -> String {
    format!("member_{index:04}.minr")
}

fn pretrain(args: PretrainArgs) -> Result<()> {
    let dataset = open_dataset(&args.dataset)?;
    let config = MetaConfig {
        spatial_stride: args.lambda_s,
        temporal_stride: args.lambda_t,
        inner_lr: args.alpha,
        outer_lr: args.beta,
        inner_steps: args.k,
        outer_steps: args.outer_steps,
        batch_size: args.batch_size,
        seed: args.seed,
        network: network(&args.network)?,
    };
    let start = Instant::now();
    let outcome = if args.vanilla {
        pretrain_vanilla::<f32, _>(&dataset, &config)?
    } else {
        meta_pretrain::<f32, _>(&dataset, &config)?
    };
    info!(
        "retained fraction {} ({} of {} members)",
        outcome.retained_fraction,
        outcome.member_count,
        dataset.count()
    );
    info!(
        "pretrained in {:.3} s, final inner loss {:.6}",
        start.elapsed().as_secs_f64(),
        outcome.loss_trace.last().copied().unwrap_or(f64::NAN)
    );
    Checkpoint::new(&outcome.params, (-1.0, 1.0)).write(&args.out)?;
    info!("wrote {}", args.out.display());
    Ok(())
}

fn encode(args: EncodeArgs) -> Result<()> {
    let dataset = open_dataset(&args.dataset)?;
    let members: Vec<usize> = args
        .members
        .clone()
        .unwrap_or_else(|| (0..dataset.count()).collect());
    if let Some(bad) = members.iter().find(|&&m| m >= dataset.count()) {
        bail!(
            "member {bad} out of range (dataset has {})",
            dataset.count()
        );
    }
    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = args.workers {
        ensure!(w > 0, "worker count must be positive");
        pool = pool.num_threads(w);
    }
    let pool = pool.build()?;

    let report = if args.from_scratch {
        let config = ScratchConfig {
            steps: args.scratch_steps,
            optimizer: OptimizerKind::Adam,
            lr: args.scratch_lr,
            batch_size: args.batch_size,
            seed: args.seed,
            network: network(&args.network)?,
        };
        info!("training {} members from scratch", members.len());
        pool.install(|| encode_members(&dataset, &members, |v| train_scratch::<f32>(v, &config)))
    } else {
        let meta_path = args.meta.as_ref().expect("clap requires --meta");
        let init: MlpParameters<f32> = Checkpoint::read(meta_path)?.params();
        let config = FinetuneConfig {
            lr: args.lr,
            k: args.k,
            batch_size: args.batch_size,
            seed: args.seed,
            schedule: match args.schedule {
                ScheduleArg::Epochs => Schedule::Epochs,
                ScheduleArg::Steps => Schedule::Steps,
            },
            optimizer: match args.optimizer {
                OptimizerArg::Sgd => OptimizerKind::Sgd,
                OptimizerArg::Adam => OptimizerKind::Adam,
            },
        };
        info!(
            "finetuning {} members from {}",
            members.len(),
            meta_path.display()
        );
        pool.install(|| encode_members(&dataset, &members, |v| finetune_volume(&init, v, &config)))
    };

    let timing_path = args.out_dir.join("timing.csv");
    let mut timing = csv::Writer::from_path(&timing_path)
        .with_context(|| format!("writing {}", timing_path.display()))?;
    timing.write_record(["member_index", "seconds", "final_train_mse"])?;
    for model in &report.models.models {
        Checkpoint::new(&model.params, model.value_range)
            .write(args.out_dir.join(member_file(model.member_index)))?;
        timing.write_record([
            model.member_index.to_string(),
            model.encode_seconds.to_string(),
            model.final_train_mse.to_string(),
        ])?;
    }
    timing.flush()?;
    let member_total: f64 = report.models.models.iter().map(|m| m.encode_seconds).sum();
    info!(
        "encoded {} members: wall time {:.6} s, member total {:.6} s",
        report.models.len(),
        report.wall_seconds,
        member_total
    );
    if !report.failures.is_empty() {
        bail!(
            "{} of {} members failed",
            report.failures.len(),
            members.len()
        );
    }
    Ok(())
}

fn reconstruct(args: ReconstructArgs) -> Result<()> {
    let ckpt = Checkpoint::read(&args.model)?;
    let dims = match (&args.dims, &args.dataset) {
        (Some(d), _) => [d[0], d[1], d[2]],
        (None, Some(ds)) => open_dataset(ds)?.dims(),
        (None, None) => bail!("pass --dims or --dataset"),
    };
    let volume = reconstruct_volume(&ckpt.params::<f32>(), dims, ckpt.value_range, args.clamp)?;
    write_raw(&volume, &args.out)?;
    info!("wrote {:?} volume to {}", dims, args.out.display());
    if let (Some(obj), Some(iso)) = (&args.obj, args.iso) {
        let mesh = marching_cubes(&volume, iso)?;
        let file = fs::File::create(obj).with_context(|| format!("creating {}", obj.display()))?;
        mesh.write_obj(BufWriter::new(file))?;
        info!(
            "wrote {} triangles to {}",
            mesh.triangles.len(),
            obj.display()
        );
    }
    Ok(())
}

/// Checkpoints named `member_NNNN.minr` in `dir`, ordered by member index.
pub fn load_model_dir(dir: &Path) -> Result<Vec<(usize, Checkpoint)>> {
    let mut found: Vec<(usize, PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default();
        if let Some(index) = name
            .strip_prefix("member_")
            .and_then(|n| n.strip_suffix(".minr"))
            .and_then(|n| n.parse().ok())
        {
            found.push((index, path));
        }
    }
    ensure!(
        !found.is_empty(),
        "no member checkpoints in {}",
        dir.display()
    );
    found.sort();
    found
        .into_iter()
        .map(|(i, p)| Ok((i, Checkpoint::read(&p)?)))
        .collect()
}

fn metrics(args: MetricsArgs) -> Result<()> {
    let dataset = open_dataset(&args.dataset)?;
    let mut models = load_model_dir(&args.models)?;
    if let Some(wanted) = &args.members {
        models.retain(|(i, _)| wanted.contains(i));
    }
    let options = EvalOptions {
        clamp: args.clamp,
        peak: args.psnr_peak.map_or(PsnrPeak::Reference, PsnrPeak::Fixed),
    };
    let fresh = fs::metadata(&args.out)
        .map(|m| m.len() == 0)
        .unwrap_or(true);
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&args.out)
        .with_context(|| format!("opening {}", args.out.display()))?;
    let mut out = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(file);
    if fresh {
        out.write_record(["member_index", "psnr_db", "chamfer", "mse"])?;
    }
    let mut failures = 0;
    for (index, ckpt) in &models {
        let result = dataset
            .load(*index)
            .map_err(anyhow::Error::from)
            .and_then(|truth| {
                let iso = if args.iso_normalized {
                    denormalize_value(args.iso, truth.value_range())
                } else {
                    args.iso
                };
                Ok(evaluate_member(
                    *index,
                    &ckpt.params::<f32>(),
                    &truth,
                    iso,
                    options,
                )?)
            });
        match result {
            Ok(r) => {
                info!(
                    "member {index}: PSNR {:.3} dB, CD {:?}",
                    r.psnr_db, r.chamfer
                );
                out.write_record([
                    r.member_index.to_string(),
                    if r.psnr_db.is_infinite() {
                        "inf".into()
                    } else {
                        r.psnr_db.to_string()
                    },
                    r.chamfer.map_or("NA".into(), |c| c.to_string()),
                    r.mse.to_string(),
                ])?;
            }
            Err(e) => {
                warn!("member {index} failed: {e:#}");
                failures += 1;
            }
        }
    }
    out.flush()?;
    ensure!(
        failures == 0,
        "{failures} of {} members failed",
        models.len()
    );
    Ok(())
}

fn model_matrix(dir: &Path) -> Result<ParamMatrix> {
    let models = load_model_dir(dir)?;
    let adapted = models
        .into_iter()
        .map(|(member_index, ckpt)| AdaptedModel {
            member_index,
            params: ckpt.params::<f64>(),
            value_range: ckpt.value_range,
            encode_seconds: 0.0,
            final_train_mse: f64::NAN,
        })
        .collect();
    let set = AdaptedModelSet::new(dir.display().to_string(), adapted)?;
    Ok(ParamMatrix::from_models(&set)?)
}

fn project(args: ProjectArgs) -> Result<()> {
    let mut matrix = model_matrix(&args.models)?;
    if args.standardize {
        matrix = matrix.standardized();
    }
    let mut projection = match args.method {
        MethodArg::Pca => pca_projection(&matrix)?,
        MethodArg::Tsne => tsne_project(
            &matrix,
            &TsneConfig {
                perplexity: args.perplexity,
                iterations: args.iterations,
                seed: args.seed,
                ..Default::default()
            },
        )?,
    };
    if let Some(ds) = &args.dataset {
        if let Some(labels) = &open_dataset(ds)?.descriptor().labels {
            projection = projection.with_labels(labels)?;
        }
    }
    let keys: BTreeSet<String> = projection
        .labels
        .iter()
        .flatten()
        .flat_map(|l| l.keys().cloned())
        .collect();
    let mut out = csv::Writer::from_path(&args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    let mut header = vec!["member_index".to_string(), "x".into(), "y".into()];
    header.extend(keys.iter().cloned());
    out.write_record(&header)?;
    for (row, (&id, p)) in projection
        .member_ids
        .iter()
        .zip(&projection.points)
        .enumerate()
    {
        let mut record = vec![id.to_string(), p[0].to_string(), p[1].to_string()];
        for key in &keys {
            let value = projection.labels.as_ref().and_then(|l| l[row].get(key));
            record.push(value.map(|v| v.to_string()).unwrap_or_default());
        }
        out.write_record(&record)?;
    }
    out.flush()?;
    if let Some(kl) = projection.objective_trace.last() {
        info!("t-SNE final KL divergence {kl:.6}");
    }
    Ok(())
}

fn select(args: SelectArgs) -> Result<()> {
    let matrix = model_matrix(&args.models)?;
    let selection = select_timesteps(&matrix, args.k)?;
    let json = serde_json::to_string(&selection.selected)?;
    match &args.out {
        Some(path) => {
            fs::write(path, json + "\n").with_context(|| format!("writing {}", path.display()))?
        }
        None => println!("{json}"),
    }
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    ensure!(
        args.size >= 2 && args.count >= 1,
        "need size ≥ 2 and count ≥ 1"
    );
    let dims = [args.size; 3];
    let volumes = match args.kind {
        SynthKind::Blob => moving_blob_sequence(dims, args.count, args.sigma),
        SynthKind::Sphere => (0..args.count)
            .map(|t| {
                let s = if args.count > 1 {
                    t as f64 / (args.count - 1) as f64
                } else {
                    0.5
                };
                let c = (args.size - 1) as f64 / 2.0;
                sphere_sdf(dims, [c; 3], args.size as f64 * (0.2 + 0.15 * s))
            })
            .collect(),
    };
    fs::create_dir_all(&args.out_dir)?;
    let labels = (0..args.count)
        .map(|t| Labels::from([("timestep".to_string(), LabelValue::Number(t as f64))]))
        .collect();
    let (path, _) = Dataset::create(
        &args.out_dir,
        &args.name,
        "vol_{index:04}.raw",
        &volumes,
        Some(labels),
    )?;
    info!("wrote {} members and {}", args.count, path.display());
    Ok(())
}
