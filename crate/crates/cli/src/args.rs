use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use intrinsic_core::bilateral::{Backend, BilateralParams};
use intrinsic_core::data::DatasetKind;
use intrinsic_core::metrics::{Metric, MetricConfig};
use intrinsic_core::network::NetConfig;
use intrinsic_core::train::TrainConfig;

#[derive(Debug, Parser)]
#[command(
    name = "intrinsic",
    version,
    about = "Intrinsic image decomposition toolkit"
)]
pub struct Cli {
    /// Suppress progress messages on standard error.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split an image into reflectance and shading.
    Decompose(DecomposeArgs),
    /// Train a network on a dataset manifest.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset manifest.
    Eval(EvalArgs),
    /// Generate a synthetic dataset and its manifest.
    Generate(GenerateArgs),
    /// Replace the texture inside a mask, keeping the estimated shading.
    Retexture(RetextureArgs),
    /// Pick solver parameters with the lowest WHDR over a grid.
    Tune(TuneArgs),
    /// Write a freshly initialized checkpoint.
    Init(InitArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Dense,
    Grid,
}

impl From<BackendArg> for Backend {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Dense => Backend::Dense,
            BackendArg::Grid => Backend::Grid,
        }
    }
}

#[derive(Debug, Clone, Args)]
#[group(id = "solver", multiple = true)]
#[command(next_help_heading = "Solver")]
pub struct SolverArgs {
    /// Smoothness weight.
    #[arg(long, default_value_t = 12000.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 5.0)]
    pub sigma_x: f64,
    #[arg(long, default_value_t = 5.0)]
    pub sigma_y: f64,
    #[arg(long, default_value_t = 7.0)]
    pub sigma_l: f64,
    #[arg(long, default_value_t = 3.0)]
    pub sigma_u: f64,
    #[arg(long, default_value_t = 3.0)]
    pub sigma_v: f64,
    #[arg(long, value_enum, default_value_t = BackendArg::Grid)]
    pub backend: BackendArg,
    /// Relative residual tolerance.
    #[arg(long, default_value_t = 1e-6)]
    pub cg_tol: f64,
    #[arg(long, default_value_t = 500)]
    pub cg_max_iter: usize,
}

impl SolverArgs {
    pub fn params(&self) -> BilateralParams {
        BilateralParams {
            gamma: self.gamma,
            sigma_x: self.sigma_x,
            sigma_y: self.sigma_y,
            sigma_l: self.sigma_l,
            sigma_u: self.sigma_u,
            sigma_v: self.sigma_v,
            backend: self.backend.into(),
            cg_tol: self.cg_tol,
            cg_max_iter: self.cg_max_iter,
        }
    }
}

#[derive(Debug, Clone, Args)]
#[group(id = "net", multiple = true)]
#[command(next_help_heading = "Network")]
pub struct NetArgs {
    /// Encoder/decoder levels; inputs must be divisible by 2^levels.
    #[arg(long, default_value_t = 4)]
    pub levels: usize,
    #[arg(long, default_value_t = 16)]
    pub base_channels: usize,
    #[arg(long, default_value_t = 3)]
    pub kernel: usize,
    /// Seed for weight initialization.
    #[arg(long, default_value_t = 0)]
    pub init_seed: u64,
}

impl NetArgs {
    pub fn config(&self) -> NetConfig {
        NetConfig {
            levels: self.levels,
            base_channels: self.base_channels,
            kernel: self.kernel,
            input_channels: 3,
            seed: self.init_seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    /// Input image (.png or .pfm).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Skip bilateral filtering of the reflectance.
    #[arg(long, conflicts_with = "solver")]
    pub no_bilateral: bool,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Stage {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    Both,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum, default_value_t = Stage::Both)]
    pub stage: Stage,
    /// Final checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    /// JSONL training log (default: <out>.log.jsonl).
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Checkpoint to start from.
    #[arg(long, conflicts_with = "net")]
    pub init: Option<PathBuf>,
    /// Allow stage 2 from a freshly initialized network.
    #[arg(long)]
    pub cold_start: bool,
    /// Allow stage 2 on a manifest without real scenes (synthetic batches only).
    #[arg(long)]
    pub allow_synthetic_only: bool,
    #[command(flatten)]
    pub train: TrainFlags,
    #[command(flatten)]
    pub net: NetArgs,
    /// Train the real-pair loss on unfiltered reflectance.
    #[arg(long, conflicts_with = "solver")]
    pub no_bilateral: bool,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Clone, Args)]
#[command(next_help_heading = "Training")]
pub struct TrainFlags {
    #[arg(long, default_value_t = 2e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    pub beta2: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub adam_epsilon: f64,
    /// Square crop side.
    #[arg(long, default_value_t = 64)]
    pub crop: usize,
    #[arg(long, default_value_t = 4)]
    pub stage1_batch: usize,
    /// Synthetic items per stage-2 batch.
    #[arg(long, default_value_t = 4)]
    pub stage2_synthetic: usize,
    /// Real pairs per stage-2 batch.
    #[arg(long, default_value_t = 4)]
    pub stage2_real: usize,
    #[arg(long, default_value_t = 2000)]
    pub stage1_iters: usize,
    #[arg(long, default_value_t = 2000)]
    pub stage2_iters: usize,
    /// Weight of the real-pair loss.
    #[arg(long, default_value_t = 0.5)]
    pub omega: f64,
    /// Horizontal flip probability.
    #[arg(long, default_value_t = 0.0)]
    pub flip_prob: f64,
    /// Sampling seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Intermediate checkpoint cadence in iterations (0 disables).
    #[arg(long, default_value_t = 0)]
    pub checkpoint_every: usize,
    /// Directory for intermediate checkpoints.
    #[arg(long)]
    pub checkpoint_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub log_every: usize,
}

impl TrainFlags {
    pub fn config(&self, bilateral: BilateralParams, filter_real: bool) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            adam_epsilon: self.adam_epsilon,
            crop: self.crop,
            stage1_batch: self.stage1_batch,
            stage2_batch: self.stage2_synthetic + self.stage2_real,
            stage2_synthetic: self.stage2_synthetic,
            stage2_real: self.stage2_real,
            stage1_iters: self.stage1_iters,
            stage2_iters: self.stage2_iters,
            omega: self.omega,
            bilateral,
            filter_real,
            flip_prob: self.flip_prob,
            seed: self.seed,
            checkpoint_every: self.checkpoint_every,
            checkpoint_dir: self.checkpoint_dir.clone(),
            log_every: self.log_every,
        }
    }
}

/// `none` or a positive size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Resize(pub Option<usize>);

fn parse_resize(s: &str) -> Result<Resize, String> {
    if s == "none" {
        return Ok(Resize(None));
    }
    match s.parse::<usize>() {
        Ok(0) | Err(_) => Err(format!("expected a positive size or 'none', got '{s}'")),
        Ok(n) => Ok(Resize(Some(n))),
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, required_unless_present = "oracle")]
    pub checkpoint: Option<PathBuf>,
    /// Use the manifest's ground truth instead of a network.
    #[arg(long, conflicts_with = "checkpoint")]
    pub oracle: bool,
    #[arg(long, value_delimiter = ',', default_value = "whdr,mpre,simse,silmse")]
    pub metrics: Vec<Metric>,
    /// Report JSON path.
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long, default_value_t = 0.10)]
    pub whdr_delta: f64,
    #[arg(long, default_value_t = 0.10)]
    pub lmse_window_frac: f64,
    #[arg(long, default_value_t = 0.05)]
    pub lmse_stride_frac: f64,
    /// Larger-dimension size for MPRE inputs, or 'none' for native size.
    #[arg(long, value_parser = parse_resize, default_value = "640")]
    pub mpre_resize: Resize,
    /// Evaluate raw network reflectance.
    #[arg(long, conflicts_with = "solver")]
    pub no_bilateral: bool,
    #[command(flatten)]
    pub solver: SolverArgs,
}

impl EvalArgs {
    pub fn metric_config(&self) -> MetricConfig {
        MetricConfig {
            whdr_delta: self.whdr_delta,
            lmse_window_frac: self.lmse_window_frac,
            lmse_stride_frac: self.lmse_stride_frac,
            mpre_resize: self.mpre_resize.0,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Dataset kinds, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "mondrian")]
    pub kind: Vec<DatasetKind>,
    /// Scenes per kind.
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    /// Reflectance regions per Mondrian.
    #[arg(long, default_value_t = 12)]
    pub regions: usize,
    #[arg(long, default_value_t = 3)]
    pub images_per_group: usize,
    /// Comparisons per judgement scene.
    #[arg(long, default_value_t = 200)]
    pub judgement_pairs: usize,
    #[arg(long, default_value_t = 0.10)]
    pub delta: f64,
}

#[derive(Debug, Args)]
pub struct RetextureArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Replacement reflectance, same size as the input.
    #[arg(long)]
    pub texture: PathBuf,
    /// Binary mask; 1 marks pixels to retexture.
    #[arg(long)]
    pub mask: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, conflicts_with = "solver")]
    pub no_bilateral: bool,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    /// Manifest with judgement scenes.
    #[arg(long)]
    pub manifest: PathBuf,
    /// JSON candidate list, or an object mapping parameter names to value lists.
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Output path for the winning parameters.
    #[arg(long)]
    pub out: PathBuf,
    /// Sweep table path (default: <out>.table.json).
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long, default_value_t = 0.10)]
    pub whdr_delta: f64,
}

#[derive(Debug, Args)]
pub struct InitArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Identity-like model that returns the input as reflectance.
    #[arg(long)]
    pub passthrough: bool,
    #[command(flatten)]
    pub net: NetArgs,
}
