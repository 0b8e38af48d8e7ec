//! Declarative pipeline configuration loaded from TOML.
//!
//! Every subcommand reads the same file; command-line flags override the
//! values found here.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use fstack_core::dataset::{SplitCounts, DEFAULT_CROP_SIZE};
use fstack_core::metrics::DEFAULT_IGNORE_BORDER;
use fstack_core::noise::{sample_noise_params, NoiseParams, RngSeed};
use fstack_core::{AugmentOp, EccConfig, FusionConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliResult, Failure};
use crate::seeds;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct PipelineConfig {
    /// A raw burst directory, or a directory whose subdirectories are bursts.
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub seed: u64,
    pub threads: Option<usize>,
    /// Abort with exit code 4 when any frame pair fails to register.
    pub fail_on_divergence: bool,
    pub stages: StageToggles,
    pub ecc: EccConfig,
    pub fusion: FusionConfig,
    pub noise: NoiseConfig,
    pub crops: CropConfig,
    pub split: SplitConfig,
    pub eval: EvalConfig,
}

/// Optional stages; ingestion and demosaicing always run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageToggles {
    pub register: bool,
    pub fuse: bool,
    pub crops: bool,
    pub eval: bool,
}

impl Default for StageToggles {
    fn default() -> Self {
        StageToggles {
            register: true,
            fuse: true,
            crops: true,
            eval: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    #[default]
    Off,
    Fixed,
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub mode: NoiseMode,
    pub lambda_shot: Option<f64>,
    pub lambda_read: Option<f64>,
}

impl NoiseConfig {
    /// Parameters for burst number `burst` under run seed `seed`, or `None`
    /// when noise is off.
    pub fn resolve(&self, seed: u64, burst: usize) -> CliResult<Option<NoiseParams>> {
        match self.mode {
            NoiseMode::Off => Ok(None),
            NoiseMode::Fixed => {
                let (Some(shot), Some(read)) = (self.lambda_shot, self.lambda_read) else {
                    return Err(Failure::config(
                        "noise",
                        "config",
                        "fixed noise needs both lambda_shot and lambda_read",
                    ));
                };
                NoiseParams::new(shot, read)
                    .map(Some)
                    .map_err(|e| Failure::config("noise", "config", e))
            }
            NoiseMode::Sampled => {
                let mut rng = RngSeed::new(seeds::burst_seed(seed, burst), seeds::PARAMS_STREAM).rng();
                Ok(Some(sample_noise_params(&mut rng)))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CropConfig {
    pub size: usize,
    /// Cut packed raw planes instead of RGB frames.
    pub raw: bool,
    /// Augmentations to materialize, as `r<deg>[h]` or `all`.
    pub augment: Vec<String>,
}

impl Default for CropConfig {
    fn default() -> Self {
        CropConfig {
            size: DEFAULT_CROP_SIZE,
            raw: false,
            augment: Vec::new(),
        }
    }
}

impl CropConfig {
    pub fn ops(&self) -> CliResult<Vec<AugmentOp>> {
        parse_ops(&self.augment)
    }
}

pub fn parse_ops(names: &[String]) -> CliResult<Vec<AugmentOp>> {
    let mut ops = Vec::new();
    for name in names {
        if name == "all" {
            ops.extend(AugmentOp::all());
        } else {
            ops.push(name.parse().map_err(|e| Failure::config("crops", name, e))?);
        }
    }
    ops.dedup();
    Ok(ops)
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Per-lens train/test burst counts; empty disables the split stage.
    pub counts: BTreeMap<String, SplitCounts>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub ignore_border: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            ignore_border: DEFAULT_IGNORE_BORDER,
        }
    }
}

impl PipelineConfig {
    /// Parse a TOML file. Relative `input`/`output` paths are taken relative
    /// to the file's directory.
    pub fn load(path: &Path) -> CliResult<PipelineConfig> {
        let item = path.display();
        let text = fs::read_to_string(path).map_err(|e| Failure::config("config", &item, e))?;
        let mut cfg: PipelineConfig = toml::from_str(&text).map_err(|e| Failure::config("config", &item, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.input, &mut cfg.output].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn load_or_default(path: Option<&Path>) -> CliResult<PipelineConfig> {
        path.map_or_else(|| Ok(PipelineConfig::default()), PipelineConfig::load)
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |e| Failure::config("config", "pipeline", e);
        self.ecc.validate().map_err(bad)?;
        self.fusion.validate().map_err(bad)?;
        if self.crops.size == 0 || !self.crops.size.is_multiple_of(2) {
            return Err(Failure::config(
                "config",
                "crops.size",
                "crop size must be even and nonzero",
            ));
        }
        if self.threads == Some(0) {
            return Err(Failure::config("config", "threads", "thread count must be >= 1"));
        }
        self.crops.ops()?;
        if self.noise.mode == NoiseMode::Fixed {
            self.noise.resolve(self.seed, 0)?;
        }
        Ok(())
    }

    /// The configuration as recorded in run manifests: machine-specific
    /// fields (output location, thread count) are dropped so reruns elsewhere
    /// produce identical records.
    pub fn record(&self) -> PipelineConfig {
        PipelineConfig {
            output: None,
            threads: None,
            ..self.clone()
        }
    }
}
