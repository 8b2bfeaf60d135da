use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "splatplane", version, about = "Tri-plane compression of Gaussian-splat scenes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit planes and decoders to a cloud and save a checkpoint.
    Train(TrainCmd),
    /// Code a checkpoint into a scene container.
    Encode(EncodeCmd),
    /// Reconstruct a cloud from a scene container and write it as PLY.
    Decode(DecodeCmd),
    /// Train at every quantization step of the sweep grid.
    SweepQstep(SweepCmd),
    /// Compare L1-only, +entropy and +entropy with channel weights.
    Ablate(AblateCmd),
    /// Print the section size breakdown of a container.
    Report(ReportCmd),
}

#[derive(Debug, Clone, Args)]
pub struct SceneArgs {
    /// PLY file, or `synthetic` for the builtin generated scene.
    #[arg(long, default_value = "synthetic")]
    pub input: String,
    /// Point count of the synthetic scene.
    #[arg(long, default_value_t = 2000)]
    pub points: usize,
    /// SH degree of the synthetic scene.
    #[arg(long, default_value_t = 0)]
    pub sh_degree: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Total iterations. Schedule stages, entropy start and importance
    /// iteration scale with it unless given explicitly.
    #[arg(long, default_value_t = 40_000)]
    pub iterations: u64,
    #[arg(long, default_value_t = 512)]
    pub resolution: usize,
    #[arg(long, default_value_t = 8)]
    pub channels: usize,
    #[arg(long, default_value_t = 0.005)]
    pub plane_lr: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub decoder_lr: f64,
    #[arg(long, default_value_t = splatplane::trainer::DEFAULT_LAMBDA_ENT)]
    pub lambda_ent: f64,
    #[arg(long, default_value_t = splatplane::trainer::DEFAULT_LAMBDA_L1)]
    pub lambda_l1: f64,
    #[arg(long)]
    pub entropy_start: Option<u64>,
    #[arg(long)]
    pub ci_iteration: Option<u64>,
    #[arg(long, default_value_t = 256.0)]
    pub q_step: f64,
    /// Keep all-ones entropy weights after measuring channel importance.
    #[arg(long)]
    pub no_channel_weights: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Builtin,
    ExternalHm,
    ExternalX265,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LayoutArg {
    PerSlice,
    Tiled,
}

#[derive(Debug, Clone, Args)]
pub struct CodecArgs {
    #[arg(long, value_enum, default_value_t = BackendArg::Builtin)]
    pub backend: BackendArg,
    #[arg(long, default_value_t = 1)]
    pub qp: u32,
    #[arg(long)]
    pub lossless: bool,
    #[arg(long, value_enum, default_value_t = LayoutArg::PerSlice)]
    pub layout: LayoutArg,
    #[arg(long, default_value_t = 30)]
    pub framerate: u32,
}

#[derive(Debug, Args)]
pub struct TrainCmd {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    /// Checkpoint to write.
    #[arg(long)]
    pub output: PathBuf,
    /// CSV training log to write.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EncodeCmd {
    /// Checkpoint written by `train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub codec: CodecArgs,
}

#[derive(Debug, Args)]
pub struct DecodeCmd {
    #[arg(long)]
    pub input: PathBuf,
    /// PLY file to write.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepCmd {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    #[command(flatten)]
    pub codec: CodecArgs,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct AblateCmd {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    #[command(flatten)]
    pub codec: CodecArgs,
    #[arg(long)]
    pub output: PathBuf,
    /// Plot data (log2 rate against quality).
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportCmd {
    #[arg(long)]
    pub input: PathBuf,
    /// CSV file for the breakdown; printed only when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
}
