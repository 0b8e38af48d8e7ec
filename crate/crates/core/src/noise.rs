//! Heteroscedastic Gaussian sensor noise in the normalized raw domain.
//!
//! A pixel of intensity `x` becomes `y ~ N(x, λ_read + λ_shot·x)`, clamped
//! to `[0, 1]`. Noise levels are drawn log-uniformly for shot noise with read
//! noise conditioned linearly on it in log space.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::raw::PlanarRaw;

pub const LAMBDA_SHOT_MIN: f64 = 0.0001;
pub const LAMBDA_SHOT_MAX: f64 = 0.012;
pub const READ_SLOPE: f64 = 2.18;
pub const READ_INTERCEPT: f64 = 1.2;
pub const READ_SIGMA: f64 = 0.26;

/// Shot and read noise variances for intensities normalized to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub lambda_shot: f64,
    pub lambda_read: f64,
}

impl NoiseParams {
    pub fn new(lambda_shot: f64, lambda_read: f64) -> Result<Self> {
        let params = NoiseParams {
            lambda_shot,
            lambda_read,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda_shot", self.lambda_shot), ("lambda_read", self.lambda_read)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Noise variance at intensity `x`.
    pub fn variance(&self, x: f64) -> f64 {
        self.lambda_read + self.lambda_shot * x
    }
}

/// A seed plus stream id; each `(seed, stream)` pair names one independent,
/// reproducible random sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngSeed {
    pub seed: u64,
    pub stream: u64,
}

impl RngSeed {
    pub fn new(seed: u64, stream: u64) -> Self {
        RngSeed { seed, stream }
    }

    pub fn with_stream(self, stream: u64) -> Self {
        RngSeed { stream, ..self }
    }

    /// A fresh seed drawn from this stream, for deriving child streams.
    pub fn derive(&self) -> u64 {
        self.rng().next_u64()
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// Draw one set of noise parameters.
pub fn sample_noise_params<R: Rng + ?Sized>(rng: &mut R) -> NoiseParams {
    let (lo, hi) = (LAMBDA_SHOT_MIN.ln(), LAMBDA_SHOT_MAX.ln());
    let log_shot = lo + (hi - lo) * rng.random::<f64>();
    let z: f64 = rng.sample(StandardNormal);
    let log_read = READ_SLOPE * log_shot + READ_INTERCEPT + READ_SIGMA * z;
    NoiseParams {
        lambda_shot: log_shot.exp().clamp(LAMBDA_SHOT_MIN, LAMBDA_SHOT_MAX),
        lambda_read: log_read.exp().max(0.0),
    }
}

fn check_range(image: &Image) -> Result<()> {
    match image.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        Some(v) => Err(Error::InvalidParameter(format!("noise input value {v} outside [0, 1]"))),
        None => Ok(()),
    }
}

/// Noisy values before clamping. Samples are drawn in storage order, so the
/// result depends only on the image, the parameters and the generator state.
pub fn add_noise_unclipped<R: Rng + ?Sized>(image: &Image, params: NoiseParams, rng: &mut R) -> Result<Image> {
    params.validate()?;
    check_range(image)?;
    let data = image
        .data()
        .iter()
        .map(|&x| {
            let z: f64 = rng.sample(StandardNormal);
            x + params.variance(x).sqrt() * z
        })
        .collect();
    Image::from_vec(image.width(), image.height(), image.channels(), data)
}

pub fn add_noise<R: Rng + ?Sized>(image: &Image, params: NoiseParams, rng: &mut R) -> Result<Image> {
    Ok(add_noise_unclipped(image, params, rng)?.clamp01())
}

pub fn add_noise_planar<R: Rng + ?Sized>(raw: &PlanarRaw, params: NoiseParams, rng: &mut R) -> Result<PlanarRaw> {
    Ok(PlanarRaw {
        image: add_noise(&raw.image, params, rng)?,
        pattern: raw.pattern,
    })
}

/// Noise every frame of a burst with shared parameters. Frame `i` uses
/// stream `i` of `seed`, so results do not depend on scheduling.
pub fn add_noise_burst(frames: &[Image], params: NoiseParams, seed: u64) -> Result<Vec<Image>> {
    frames
        .par_iter()
        .enumerate()
        .map(|(i, frame)| add_noise(frame, params, &mut RngSeed::new(seed, i as u64).rng()))
        .collect()
}

pub fn add_noise_planar_burst(frames: &[PlanarRaw], params: NoiseParams, seed: u64) -> Result<Vec<PlanarRaw>> {
    frames
        .par_iter()
        .enumerate()
        .map(|(i, frame)| add_noise_planar(frame, params, &mut RngSeed::new(seed, i as u64).rng()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_params_are_identity() {
        let img = Image::from_fn(9, 7, 3, |c, x, y| ((c + x * y) % 11) as f64 / 10.0);
        let out = add_noise(&img, NoiseParams::new(0.0, 0.0).unwrap(), &mut RngSeed::new(1, 0).rng()).unwrap();
        assert_eq!(out.data(), img.data());
    }

    #[test]
    fn negative_and_non_finite_params_are_rejected() {
        assert!(NoiseParams::new(-1e-3, 0.0).is_err());
        assert!(NoiseParams::new(0.0, -1e-9).is_err());
        assert!(NoiseParams::new(f64::NAN, 0.0).is_err());
        let img = Image::filled(2, 2, 1, 0.5);
        let bad = NoiseParams {
            lambda_shot: -1.0,
            lambda_read: 0.0,
        };
        assert!(add_noise(&img, bad, &mut RngSeed::new(0, 0).rng()).is_err());
    }

    #[test]
    fn out_of_range_input_is_rejected() {
        let img = Image::filled(2, 2, 1, 1.5);
        let params = NoiseParams::new(0.01, 0.0).unwrap();
        assert!(add_noise(&img, params, &mut RngSeed::new(0, 0).rng()).is_err());
    }

    #[test]
    fn streams_differ_and_repeat() {
        let a: Vec<u64> = (0..4).map(|_| RngSeed::new(3, 0).rng().random()).collect();
        let mut r0 = RngSeed::new(3, 0).rng();
        let mut r1 = RngSeed::new(3, 1).rng();
        assert_eq!(a[0], a[1]);
        assert_ne!(r0.random::<u64>(), r1.random::<u64>());
    }
}
