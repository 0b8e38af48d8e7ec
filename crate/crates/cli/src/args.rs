//! Command-line surface.

use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use fstack_core::{EccConfig, FusionConfig, FusionMethod};

use crate::config::{NoiseConfig, NoiseMode, StageToggles};

#[derive(Debug, Parser)]
#[command(
    name = "fstack",
    version,
    about = "Raw burst registration, focus stacking and crop datasets"
)]
pub struct Cli {
    /// TOML configuration file; flags given on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Worker threads (defaults to the config value, then to all cores).
    #[arg(long, global = true, env = "FSTACK_THREADS")]
    pub threads: Option<usize>,

    /// More log output; repeat for debug messages.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a raw burst and write demosaiced (or packed) frames.
    Ingest(IngestArgs),
    /// Register a burst to its first frame and write warps.json.
    Register(RegisterArgs),
    /// Register and fuse a burst into one all-in-focus image.
    Stack(StackArgs),
    /// Add synthetic shot/read noise to a burst.
    Noise(NoiseArgs),
    /// Cut a burst and its ground truth into a crop dataset.
    Crops(CropsArgs),
    /// Assign the bursts of a crop manifest to train/test splits.
    Split(SplitArgs),
    /// Score predictions against ground truth with PSNR and SSIM.
    Eval(EvalArgs),
    /// Run ingest, registration, noise, fusion, crops and evaluation.
    Pipeline(PipelineArgs),
    /// Write the synthetic miniature raw burst used for smoke tests.
    Fixture(FixtureArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct EccFlags {
    /// ECC pyramid levels.
    #[arg(long)]
    pub ecc_levels: Option<usize>,
    /// ECC iterations per level.
    #[arg(long)]
    pub ecc_iterations: Option<usize>,
    /// ECC convergence threshold on the parameter update norm.
    #[arg(long)]
    pub ecc_epsilon: Option<f64>,
    /// Gaussian pre-blur sigma in pixels.
    #[arg(long)]
    pub ecc_blur: Option<f64>,
}

impl EccFlags {
    pub fn apply(&self, cfg: &mut EccConfig) {
        if let Some(v) = self.ecc_levels {
            cfg.pyramid_levels = v;
        }
        if let Some(v) = self.ecc_iterations {
            cfg.max_iterations = v;
        }
        if let Some(v) = self.ecc_epsilon {
            cfg.epsilon = v;
        }
        if let Some(v) = self.ecc_blur {
            cfg.pre_blur_sigma = v;
        }
    }
}

fn parse_method(s: &str) -> Result<FusionMethod, String> {
    s.parse().map_err(|e: fstack_core::Error| e.to_string())
}

#[derive(Debug, Clone, Default, Args)]
pub struct FusionFlags {
    /// pixel_contrast, pixel_variance, laplacian or wavelet.
    #[arg(long, value_parser = parse_method)]
    pub method: Option<FusionMethod>,
    #[arg(long)]
    pub pyramid_levels: Option<usize>,
    #[arg(long)]
    pub wavelet_levels: Option<usize>,
    #[arg(long)]
    pub variance_radius: Option<usize>,
    /// Radius of the majority filter applied to selection maps.
    #[arg(long)]
    pub smooth_radius: Option<usize>,
}

impl FusionFlags {
    pub fn apply(&self, cfg: &mut FusionConfig) {
        if let Some(v) = self.method {
            cfg.method = v;
        }
        if let Some(v) = self.pyramid_levels {
            cfg.pyramid_levels = v;
        }
        if let Some(v) = self.wavelet_levels {
            cfg.wavelet_levels = v;
        }
        if let Some(v) = self.variance_radius {
            cfg.variance_radius = v;
        }
        if let Some(v) = self.smooth_radius {
            cfg.decision_smooth_radius = v;
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct NoiseFlags {
    #[arg(long, value_enum)]
    pub noise: Option<NoiseMode>,
    /// Shot noise variance per unit intensity (implies fixed mode).
    #[arg(long)]
    pub lambda_shot: Option<f64>,
    /// Read noise variance (implies fixed mode).
    #[arg(long)]
    pub lambda_read: Option<f64>,
    /// Draw noise levels from the sampling model (same as --noise sampled).
    #[arg(long, conflicts_with_all = ["lambda_shot", "lambda_read"])]
    pub sample: bool,
}

impl NoiseFlags {
    pub fn apply(&self, cfg: &mut NoiseConfig) {
        if self.lambda_shot.is_some() || self.lambda_read.is_some() {
            cfg.mode = NoiseMode::Fixed;
        }
        if self.sample {
            cfg.mode = NoiseMode::Sampled;
        }
        if let Some(m) = self.noise {
            cfg.mode = m;
        }
        if self.lambda_shot.is_some() {
            cfg.lambda_shot = self.lambda_shot;
        }
        if self.lambda_read.is_some() {
            cfg.lambda_read = self.lambda_read;
        }
    }
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub burst_dir: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Write packed R, G1, G2, B planes (stacked vertically) instead of RGB.
    #[arg(long)]
    pub planar: bool,
}

#[derive(Debug, Args)]
pub struct RegisterArgs {
    #[arg(long)]
    pub burst_dir: PathBuf,
    /// Output directory for warps.json and aligned frames.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the frames resampled onto the reference grid.
    #[arg(long)]
    pub aligned: bool,
    #[arg(long)]
    pub fail_on_divergence: bool,
    #[command(flatten)]
    pub ecc: EccFlags,
}

#[derive(Debug, Args)]
pub struct StackArgs {
    #[arg(long)]
    pub burst_dir: PathBuf,
    /// Fused image path (.png for 16-bit PNG, .pfm for float).
    #[arg(long)]
    pub out: PathBuf,
    /// Reuse warps from a previous registration instead of registering.
    #[arg(long, conflicts_with = "no_register")]
    pub warps: Option<PathBuf>,
    /// Fuse the frames as they are.
    #[arg(long)]
    pub no_register: bool,
    /// Where to write the estimated warps (default: warps.json beside --out).
    #[arg(long)]
    pub warps_out: Option<PathBuf>,
    /// Write the per-pixel frame choice of pixelwise methods as an image.
    #[arg(long)]
    pub decision_map: Option<PathBuf>,
    #[arg(long)]
    pub fail_on_divergence: bool,
    #[command(flatten)]
    pub ecc: EccFlags,
    #[command(flatten)]
    pub fusion: FusionFlags,
}

#[derive(Debug, Args)]
pub struct NoiseArgs {
    #[arg(long)]
    pub burst_dir: PathBuf,
    /// Output directory for the noisy frames and noise.json.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub noise: NoiseFlags,
}

#[derive(Debug, Args)]
pub struct CropsArgs {
    #[arg(long)]
    pub burst_dir: PathBuf,
    /// Ground-truth image (default: gt.png in the burst directory).
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[arg(long)]
    pub size: Option<usize>,
    /// Dataset root; crops go to <out>/<id>/ and the manifest to <out>/manifest.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Cut packed raw planes instead of RGB frames.
    #[arg(long)]
    pub raw: bool,
    /// Apply these warps before cropping.
    #[arg(long, conflicts_with = "register")]
    pub warps: Option<PathBuf>,
    /// Register the burst before cropping.
    #[arg(long)]
    pub register: bool,
    /// Burst id (default: directory name).
    #[arg(long)]
    pub id: Option<String>,
    #[arg(long)]
    pub lens: Option<String>,
    /// Augmentations to materialize: r0, r90, r180, r270 with optional h suffix, or all.
    #[arg(long, value_delimiter = ',')]
    pub augment: Vec<String>,
    #[command(flatten)]
    pub ecc: EccFlags,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Per-lens counts as LENS=TRAIN/TEST; repeatable.
    #[arg(long = "count", value_name = "LENS=TRAIN/TEST")]
    pub counts: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the updated manifest here instead of in place.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Prediction image, or a directory of images matched to --gt by stem.
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// Item id when scoring a single pair (default: prediction file stem).
    #[arg(long)]
    pub id: Option<String>,
    #[arg(long)]
    pub border: Option<usize>,
    /// Crop manifest whose burst splits label the items.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value = "report.json")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Stage {
    Register,
    Fuse,
    Crops,
    Eval,
}

impl Stage {
    pub fn disable(self, toggles: &mut StageToggles) {
        match self {
            Stage::Register => toggles.register = false,
            Stage::Fuse => toggles.fuse = false,
            Stage::Crops => toggles.crops = false,
            Stage::Eval => toggles.eval = false,
        }
    }
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// A raw burst directory or a directory of burst directories.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Stages to skip; repeatable.
    #[arg(long, value_enum)]
    pub skip: Vec<Stage>,
    #[arg(long)]
    pub crop_size: Option<usize>,
    #[arg(long)]
    pub raw_crops: bool,
    #[arg(long, value_delimiter = ',')]
    pub augment: Vec<String>,
    /// Per-lens split counts as LENS=TRAIN/TEST; repeatable.
    #[arg(long = "count", value_name = "LENS=TRAIN/TEST")]
    pub counts: Vec<String>,
    #[arg(long)]
    pub border: Option<usize>,
    #[arg(long)]
    pub fail_on_divergence: bool,
    #[command(flatten)]
    pub ecc: EccFlags,
    #[command(flatten)]
    pub fusion: FusionFlags,
    #[command(flatten)]
    pub noise: NoiseFlags,
}

#[derive(Debug, Args)]
pub struct FixtureArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 512)]
    pub size: usize,
    #[arg(long, default_value_t = 8)]
    pub frames: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
