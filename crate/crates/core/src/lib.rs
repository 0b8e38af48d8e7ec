//! Classical focus-stacking toolkit: raw burst ingestion, ECC registration,
//! multi-focus fusion, sensor noise synthesis, crop datasets and quality
//! metrics.

pub mod dataset;
pub mod error;
pub mod filter;
pub mod fuse;
pub mod image;
pub mod io;
pub mod metrics;
pub mod noise;
pub mod raw;
pub mod register;
pub mod synth;

pub use crate::dataset::{AugmentOp, CropManifest, CropRect, Split};
pub use crate::error::{Error, Result};
pub use crate::fuse::{Burst, DecisionMap, FusionConfig, FusionMethod};
pub use crate::image::Image;
pub use crate::metrics::QualityReport;
pub use crate::noise::{NoiseParams, RngSeed};
pub use crate::raw::{BayerFrame, BayerPattern, PlanarRaw};
pub use crate::register::{AffineWarp, EccConfig, RegistrationResult};
