use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "meta-inr",
    version,
    about = "Meta-pretrained implicit neural representations for volume sequences"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Meta-pretrain an initialization on a subsampled dataset.
    Pretrain(PretrainArgs),
    /// Finetune one network per member (or train each from scratch).
    Encode(EncodeArgs),
    /// Decode a network to a raw volume, optionally with an isosurface mesh.
    Reconstruct(ReconstructArgs),
    /// Score encoded members against the ground truth.
    Metrics(MetricsArgs),
    /// Project adapted parameters to 2-D.
    Project(ProjectArgs),
    /// Pick representative members in parameter space.
    Select(SelectArgs),
    /// Write a synthetic dataset (raw files plus descriptor).
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Args)]
pub struct NetworkArgs {
    /// Hidden layer width.
    #[arg(long, default_value_t = 256)]
    pub width: usize,
    /// Total number of linear layers.
    #[arg(long, default_value_t = 7)]
    pub depth: usize,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    /// Dataset descriptor (JSON).
    #[arg(long)]
    pub dataset: PathBuf,
    /// Output checkpoint.
    #[arg(long)]
    pub out: PathBuf,
    /// Spatial subsampling interval λ_s.
    #[arg(long, default_value_t = 4)]
    pub lambda_s: usize,
    /// Temporal subsampling interval λ_t.
    #[arg(long, default_value_t = 2)]
    pub lambda_t: usize,
    /// Inner-loop learning rate α.
    #[arg(long, default_value_t = 1e-4)]
    pub alpha: f64,
    /// Outer-loop learning rate β.
    #[arg(long, default_value_t = 1e-4)]
    pub beta: f64,
    /// Inner steps K.
    #[arg(long, default_value_t = 16)]
    pub k: usize,
    #[arg(long, default_value_t = 500)]
    pub outer_steps: usize,
    #[arg(long, default_value_t = 50_000)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub network: NetworkArgs,
    /// Plain joint pretraining without inner loops (baseline).
    #[arg(long)]
    pub vanilla: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScheduleArg {
    Epochs,
    Steps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OptimizerArg {
    Sgd,
    Adam,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Meta-model checkpoint to finetune from.
    #[arg(long, required_unless_present = "from_scratch")]
    pub meta: Option<PathBuf>,
    /// Directory for `member_NNNN.minr` files and `timing.csv`.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Finetuning learning rate.
    #[arg(long, default_value_t = 1e-5)]
    pub lr: f64,
    /// Epochs (or steps with `--schedule steps`).
    #[arg(long, default_value_t = 16)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = ScheduleArg::Epochs)]
    pub schedule: ScheduleArg,
    #[arg(long, value_enum, default_value_t = OptimizerArg::Sgd)]
    pub optimizer: OptimizerArg,
    #[arg(long, default_value_t = 50_000)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Members to encode (default: all).
    #[arg(long, value_delimiter = ',')]
    pub members: Option<Vec<usize>>,
    /// Parallel member workers.
    #[arg(long, env = "META_INR_WORKERS")]
    pub workers: Option<usize>,
    /// Train each member from a random init with Adam instead of finetuning.
    #[arg(long)]
    pub from_scratch: bool,
    /// Steps per member for `--from-scratch`.
    #[arg(long, default_value_t = 1000)]
    pub scratch_steps: usize,
    /// Learning rate for `--from-scratch`.
    #[arg(long, default_value_t = 1e-4)]
    pub scratch_lr: f64,
    /// Network shape for `--from-scratch`.
    #[command(flatten)]
    pub network: NetworkArgs,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    /// Network checkpoint.
    #[arg(long)]
    pub model: PathBuf,
    /// Output grid size; taken from `--dataset` when omitted.
    #[arg(long, num_args = 3, value_names = ["X", "Y", "Z"])]
    pub dims: Option<Vec<usize>>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Output raw file (f32 little-endian, x fastest).
    #[arg(long)]
    pub out: PathBuf,
    /// Limit network outputs to the stored value range.
    #[arg(long)]
    pub clamp: bool,
    /// Also write the isosurface at `--iso` as OBJ.
    #[arg(long, requires = "iso")]
    pub obj: Option<PathBuf>,
    #[arg(long)]
    pub iso: Option<f64>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Directory holding `member_NNNN.minr` files.
    #[arg(long)]
    pub models: PathBuf,
    /// Isovalue for the Chamfer distance, in original data units.
    #[arg(long, allow_hyphen_values = true)]
    pub iso: f64,
    /// Read `--iso` in normalized [−1, 1] units instead.
    #[arg(long)]
    pub iso_normalized: bool,
    #[arg(long)]
    pub clamp: bool,
    /// Fixed PSNR peak instead of each member's value span.
    #[arg(long)]
    pub psnr_peak: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub members: Option<Vec<usize>>,
    /// CSV to append rows to (created with a header if missing).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Tsne,
    Pca,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[arg(long)]
    pub models: PathBuf,
    #[arg(long, value_enum, default_value_t = MethodArg::Tsne)]
    pub method: MethodArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub perplexity: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    pub iterations: usize,
    /// Scale each parameter to zero mean and unit variance first.
    #[arg(long)]
    pub standardize: bool,
    /// Descriptor whose member labels become extra CSV columns.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long)]
    pub models: PathBuf,
    #[arg(long)]
    pub k: usize,
    /// JSON output; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    /// Translating Gaussian blob.
    Blob,
    /// Sphere signed distance with a growing radius.
    Sphere,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value = "synthetic")]
    pub name: String,
    #[arg(long, value_enum, default_value_t = SynthKind::Blob)]
    pub kind: SynthKind,
    /// Edge length of the cubic grid.
    #[arg(long, default_value_t = 32)]
    pub size: usize,
    #[arg(long, default_value_t = 8)]
    pub count: usize,
    /// Blob width in voxels.
    #[arg(long, default_value_t = 4.0)]
    pub sigma: f64,
}
