//! Classical multi-focus fusion: per-pixel sharpness selection, Laplacian
//! pyramid fusion and complex-wavelet fusion.
//!
//! Every method measures sharpness on luma (channel mean) and applies the
//! resulting choice to all channels. Pyramid and wavelet fusion run in two
//! passes over the burst (selection, then coefficient gathering) so only
//! one frame's decomposition is alive at a time besides the output.

pub mod pyramid;
pub mod wavelet;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter;
use crate::image::Image;

pub use pyramid::{build_laplacian_pyramid, collapse_laplacian_pyramid, LaplacianPyramid};
pub use wavelet::{cdw_forward, cdw_inverse, CdwCoefficients};

/// Registered frames sharing one shape.
#[derive(Debug, Clone)]
pub struct Burst {
    frames: Vec<Image>,
    pub lens: Option<String>,
    pub iso: Option<u32>,
}

impl Burst {
    pub fn new(frames: Vec<Image>) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::InvalidParameter("burst must hold at least one frame".into()))?;
        for f in &frames {
            first.ensure_same_shape(f)?;
        }
        Ok(Burst {
            frames,
            lens: None,
            iso: None,
        })
    }

    pub fn frames(&self) -> &[Image] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width()
    }

    pub fn height(&self) -> usize {
        self.frames[0].height()
    }

    pub fn channels(&self) -> usize {
        self.frames[0].channels()
    }

    pub fn into_frames(self) -> Vec<Image> {
        self.frames
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SharpnessMeasure {
    /// Magnitude of the 3×3 Laplacian.
    Contrast,
    /// Local variance over a square window.
    Variance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMethod {
    PixelContrast,
    PixelVariance,
    Laplacian,
    Wavelet,
}

impl std::str::FromStr for FusionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pixel_contrast" | "contrast" => Ok(FusionMethod::PixelContrast),
            "pixel_variance" | "variance" => Ok(FusionMethod::PixelVariance),
            "laplacian" | "laplace" => Ok(FusionMethod::Laplacian),
            "wavelet" | "wavelets" => Ok(FusionMethod::Wavelet),
            other => Err(Error::InvalidParameter(format!("unknown fusion method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub method: FusionMethod,
    pub pyramid_levels: usize,
    pub variance_radius: usize,
    pub decision_smooth_radius: usize,
    pub wavelet_levels: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            method: FusionMethod::Wavelet,
            pyramid_levels: 5,
            variance_radius: 4,
            decision_smooth_radius: 2,
            wavelet_levels: 4,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pyramid_levels < 1 || self.wavelet_levels < 1 {
            return Err(Error::InvalidParameter("fusion levels must be >= 1".into()));
        }
        if self.method == FusionMethod::PixelVariance && self.variance_radius < 1 {
            return Err(Error::InvalidParameter("variance radius must be >= 1".into()));
        }
        Ok(())
    }
}

/// Which frame supplied each output pixel.
#[derive(Debug, Clone, PartialEq)]
pub enum DecisionMap {
    /// One frame index per pixel.
    Selection {
        width: usize,
        height: usize,
        frames: usize,
        indices: Vec<u16>,
    },
    /// Per-pixel weights, frame-major (`weights[f * w * h + p]`).
    Soft {
        width: usize,
        height: usize,
        frames: usize,
        weights: Vec<f64>,
    },
}

impl DecisionMap {
    pub fn selection(width: usize, height: usize, frames: usize, indices: Vec<u16>) -> Result<Self> {
        if indices.len() != width * height {
            return Err(Error::mismatch(width * height, indices.len()));
        }
        if let Some(bad) = indices.iter().find(|&&i| i as usize >= frames) {
            return Err(Error::InvalidParameter(format!(
                "frame index {bad} outside burst of {frames}"
            )));
        }
        Ok(DecisionMap::Selection {
            width,
            height,
            frames,
            indices,
        })
    }

    pub fn soft(width: usize, height: usize, frames: usize, weights: Vec<f64>) -> Result<Self> {
        let n = width * height;
        if weights.len() != n * frames {
            return Err(Error::mismatch(n * frames, weights.len()));
        }
        for p in 0..n {
            let mut sum = 0.0;
            for f in 0..frames {
                let v = weights[f * n + p];
                if !(v >= 0.0) {
                    return Err(Error::InvalidParameter(format!("negative weight {v}")));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidParameter(format!("weights at pixel {p} sum to {sum}")));
            }
        }
        Ok(DecisionMap::Soft {
            width,
            height,
            frames,
            weights,
        })
    }

    pub fn width(&self) -> usize {
        match self {
            DecisionMap::Selection { width, .. } | DecisionMap::Soft { width, .. } => *width,
        }
    }

    pub fn height(&self) -> usize {
        match self {
            DecisionMap::Selection { height, .. } | DecisionMap::Soft { height, .. } => *height,
        }
    }

    pub fn indices(&self) -> Option<&[u16]> {
        match self {
            DecisionMap::Selection { indices, .. } => Some(indices),
            DecisionMap::Soft { .. } => None,
        }
    }

    /// Gather (or blend) output pixels from the frames.
    pub fn apply(&self, frames: &[Image]) -> Result<Image> {
        let first = frames
            .first()
            .ok_or_else(|| Error::InvalidParameter("no frames".into()))?;
        if (first.width(), first.height()) != (self.width(), self.height()) {
            return Err(Error::mismatch(
                format!("{}x{}", self.width(), self.height()),
                format!("{}x{}", first.width(), first.height()),
            ));
        }
        let n = first.plane_len();
        match self {
            DecisionMap::Selection {
                indices, frames: count, ..
            } => {
                if frames.len() != *count {
                    return Err(Error::mismatch(count, frames.len()));
                }
                Ok(Image::from_fn(
                    first.width(),
                    first.height(),
                    first.channels(),
                    |c, x, y| {
                        let p = y * first.width() + x;
                        frames[indices[p] as usize].plane(c)[p]
                    },
                ))
            }
            DecisionMap::Soft {
                weights, frames: count, ..
            } => {
                if frames.len() != *count {
                    return Err(Error::mismatch(count, frames.len()));
                }
                Ok(Image::from_fn(
                    first.width(),
                    first.height(),
                    first.channels(),
                    |c, x, y| {
                        let p = y * first.width() + x;
                        frames
                            .iter()
                            .enumerate()
                            .map(|(f, img)| weights[f * n + p] * img.plane(c)[p])
                            .sum()
                    },
                ))
            }
        }
    }

    /// Halve a selection map for packed raw planes: each 2×2 cell takes its
    /// most frequent index (lowest on ties).
    pub fn downsample_cells(&self) -> Result<DecisionMap> {
        let DecisionMap::Selection {
            width,
            height,
            frames,
            indices,
        } = self
        else {
            return Err(Error::InvalidParameter("only selection maps can be downsampled".into()));
        };
        let (cw, ch) = (width / 2, height / 2);
        let mut out = Vec::with_capacity(cw * ch);
        for y in 0..ch {
            for x in 0..cw {
                let cell = [
                    indices[2 * y * width + 2 * x],
                    indices[2 * y * width + 2 * x + 1],
                    indices[(2 * y + 1) * width + 2 * x],
                    indices[(2 * y + 1) * width + 2 * x + 1],
                ];
                let count = |v: u16| cell.iter().filter(|&&c| c == v).count();
                let best = cell
                    .iter()
                    .copied()
                    .max_by(|&a, &b| count(a).cmp(&count(b)).then(b.cmp(&a)))
                    .expect("non-empty cell");
                out.push(best);
            }
        }
        DecisionMap::selection(cw, ch, *frames, out)
    }
}

/// Per-pixel sharpness of a single-channel image.
pub fn sharpness_map(luma: &Image, measure: SharpnessMeasure, radius: usize) -> Result<Image> {
    if luma.channels() != 1 {
        return Err(Error::mismatch("1 channel", luma.channels()));
    }
    let (w, h) = (luma.width(), luma.height());
    let window = match measure {
        SharpnessMeasure::Contrast => 3,
        SharpnessMeasure::Variance => {
            if radius < 1 {
                return Err(Error::InvalidParameter("variance radius must be >= 1".into()));
            }
            2 * radius + 1
        }
    };
    if w < window || h < window {
        return Err(Error::TooSmall(format!(
            "{w}x{h} is smaller than the {window}x{window} window"
        )));
    }
    let plane = luma.plane(0);
    let data = match measure {
        SharpnessMeasure::Contrast => filter::laplacian3x3(plane, w, h).into_iter().map(f64::abs).collect(),
        SharpnessMeasure::Variance => {
            let mean = filter::box_mean(plane, w, h, radius);
            let sq: Vec<f64> = plane.iter().map(|v| v * v).collect();
            let mean_sq = filter::box_mean(&sq, w, h, radius);
            mean.iter().zip(&mean_sq).map(|(m, s)| (s - m * m).max(0.0)).collect()
        }
    };
    Image::from_vec(w, h, 1, data)
}

/// Index of the strictly largest score per position; ties keep the earlier
/// frame.
fn argmax_update(best: &mut [f64], index: &mut [u16], scores: impl Iterator<Item = f64>, frame: usize) {
    for ((b, i), s) in best.iter_mut().zip(index.iter_mut()).zip(scores) {
        if s > *b {
            *b = s;
            *i = frame as u16;
        }
    }
}

fn check_burst_size(burst: &Burst) -> Result<()> {
    if burst.len() > u16::MAX as usize {
        return Err(Error::InvalidParameter(format!(
            "{} frames exceed the index range",
            burst.len()
        )));
    }
    Ok(())
}

/// Select, per pixel, the frame with the highest sharpness, then clean the
/// decision with a majority filter of radius `smooth_radius`.
pub fn fuse_pixelwise(
    burst: &Burst,
    measure: SharpnessMeasure,
    radius: usize,
    smooth_radius: usize,
) -> Result<(Image, DecisionMap)> {
    check_burst_size(burst)?;
    let (w, h) = (burst.width(), burst.height());
    let maps = burst
        .frames()
        .par_iter()
        .map(|f| sharpness_map(&f.luma(), measure, radius))
        .collect::<Result<Vec<_>>>()?;
    let mut best = vec![f64::NEG_INFINITY; w * h];
    let mut index = vec![0u16; w * h];
    for (f, m) in maps.iter().enumerate() {
        argmax_update(&mut best, &mut index, m.data().iter().copied(), f);
    }
    let index = filter::majority_filter(&index, w, h, smooth_radius, burst.len());
    let map = DecisionMap::selection(w, h, burst.len(), index)?;
    let fused = map.apply(burst.frames())?;
    Ok((fused, map))
}

/// Laplacian-pyramid fusion: per detail coefficient keep the frame with the
/// largest luma magnitude, average the coarse residual, collapse, clamp.
pub fn fuse_laplacian(burst: &Burst, levels: usize, decision_smooth_radius: usize) -> Result<Image> {
    check_burst_size(burst)?;
    pyramid::check_depth(burst.width(), burst.height(), levels)?;
    let n = burst.len();

    // pass 1: per-level selection and residual average
    let luma_pyramids = burst
        .frames()
        .par_iter()
        .map(|f| build_laplacian_pyramid(&f.luma(), levels))
        .collect::<Result<Vec<_>>>()?;
    let details = levels - 1;
    let mut selections: Vec<Vec<u16>> = Vec::with_capacity(details);
    for k in 0..details {
        let band0 = &luma_pyramids[0].bands[k];
        let len = band0.plane_len();
        let mut best = vec![f64::NEG_INFINITY; len];
        let mut index = vec![0u16; len];
        for (f, p) in luma_pyramids.iter().enumerate() {
            argmax_update(&mut best, &mut index, p.bands[k].data().iter().map(|v| v.abs()), f);
        }
        selections.push(filter::majority_filter(
            &index,
            band0.width(),
            band0.height(),
            decision_smooth_radius,
            n,
        ));
    }
    drop(luma_pyramids);

    // pass 2: gather coefficients frame by frame
    let mut fused: Option<LaplacianPyramid> = None;
    for (f, frame) in burst.frames().iter().enumerate() {
        let p = build_laplacian_pyramid(frame, levels)?;
        let out = fused.get_or_insert_with(|| LaplacianPyramid {
            bands: p
                .bands
                .iter()
                .map(|b| Image::new(b.width(), b.height(), b.channels()))
                .collect(),
        });
        for k in 0..details {
            let sel = &selections[k];
            let len = sel.len();
            let src = &p.bands[k];
            let dst = &mut out.bands[k];
            for c in 0..src.channels() {
                let (s, d) = (src.plane(c), dst.plane_mut(c));
                for i in 0..len {
                    if sel[i] as usize == f {
                        d[i] = s[i];
                    }
                }
            }
        }
        for (d, s) in out.bands[details].data_mut().iter_mut().zip(p.bands[details].data()) {
            *d += s;
        }
    }
    let mut fused = fused.expect("burst is non-empty");
    let inv = 1.0 / n as f64;
    fused.bands[details].data_mut().iter_mut().for_each(|v| *v *= inv);
    Ok(collapse_laplacian_pyramid(&fused)?.clamp01())
}

/// Complex-wavelet fusion: per detail coefficient keep the frame with the
/// largest luma modulus, make each subband's choice consistent with a
/// majority filter, average the approximation, invert, clamp.
pub fn fuse_wavelet(burst: &Burst, wavelet_levels: usize, consistency_radius: usize) -> Result<Image> {
    check_burst_size(burst)?;
    if wavelet_levels == 0 {
        return Err(Error::InvalidParameter("wavelet levels must be >= 1".into()));
    }
    let n = burst.len();
    let lumas = burst
        .frames()
        .par_iter()
        .map(|f| cdw_forward(&f.luma(), wavelet_levels))
        .collect::<Result<Vec<_>>>()?;
    let layout = &lumas[0];
    let bands = layout.detail_subbands();
    let plane_len = layout.padded_width * layout.padded_height;
    // frame index per coefficient; the approximation block is averaged instead
    let mut choice = vec![0u16; plane_len];
    for band in &bands {
        let len = band.width * band.height;
        let mut best = vec![f64::NEG_INFINITY; len];
        let mut index = vec![0u16; len];
        for (f, coeffs) in lumas.iter().enumerate() {
            let sub = coeffs.subband(0, band);
            argmax_update(&mut best, &mut index, sub.iter().map(|v| v.norm()), f);
        }
        let index = filter::majority_filter(&index, band.width, band.height, consistency_radius, n);
        for y in 0..band.height {
            for x in 0..band.width {
                choice[layout.index(band, x, y)] = index[y * band.width + x];
            }
        }
    }
    let approx = layout.approximation();
    let mut in_approx = vec![false; plane_len];
    for y in 0..approx.height {
        for x in 0..approx.width {
            in_approx[layout.index(&approx, x, y)] = true;
        }
    }
    let template = CdwCoefficients {
        planes: Vec::new(),
        ..lumas[0].clone()
    };
    drop(lumas);

    let mut fused = CdwCoefficients {
        planes: vec![vec![Complex64::default(); plane_len]; burst.channels()],
        ..template
    };
    let inv = 1.0 / n as f64;
    for (f, frame) in burst.frames().iter().enumerate() {
        let coeffs = cdw_forward(frame, wavelet_levels)?;
        for (dst, src) in fused.planes.iter_mut().zip(&coeffs.planes) {
            for i in 0..plane_len {
                if in_approx[i] {
                    dst[i] += src[i] * inv;
                } else if choice[i] as usize == f {
                    dst[i] = src[i];
                }
            }
        }
    }
    Ok(cdw_inverse(&fused)?.clamp01())
}

/// Output of [`fuse`]; pixelwise methods also return their decision map.
#[derive(Debug, Clone)]
pub struct Fused {
    pub image: Image,
    pub decision: Option<DecisionMap>,
}

pub fn fuse(burst: &Burst, cfg: &FusionConfig) -> Result<Fused> {
    cfg.validate()?;
    Ok(match cfg.method {
        FusionMethod::PixelContrast => {
            let (image, map) = fuse_pixelwise(burst, SharpnessMeasure::Contrast, 1, cfg.decision_smooth_radius)?;
            Fused {
                image,
                decision: Some(map),
            }
        }
        FusionMethod::PixelVariance => {
            let (image, map) = fuse_pixelwise(
                burst,
                SharpnessMeasure::Variance,
                cfg.variance_radius,
                cfg.decision_smooth_radius,
            )?;
            Fused {
                image,
                decision: Some(map),
            }
        }
        FusionMethod::Laplacian => Fused {
            image: fuse_laplacian(burst, cfg.pyramid_levels, cfg.decision_smooth_radius)?,
            decision: None,
        },
        FusionMethod::Wavelet => Fused {
            image: fuse_wavelet(burst, cfg.wavelet_levels, cfg.decision_smooth_radius)?,
            decision: None,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_has_zero_sharpness() {
        let img = Image::filled(12, 10, 1, 0.4);
        for m in [SharpnessMeasure::Contrast, SharpnessMeasure::Variance] {
            let s = sharpness_map(&img, m, 2).unwrap();
            assert!(s.data().iter().all(|&v| v.abs() < 1e-15));
        }
    }

    #[test]
    fn step_edge_contrast_peaks_next_to_the_edge() {
        let img = Image::from_fn(12, 6, 1, |_, x, _| if x < 6 { 0.0 } else { 1.0 });
        let s = sharpness_map(&img, SharpnessMeasure::Contrast, 1).unwrap();
        for y in 0..6 {
            for x in 0..12 {
                let v = s.get(0, x, y);
                if x == 5 || x == 6 {
                    assert_eq!(v, 1.0);
                } else {
                    assert_eq!(v, 0.0);
                }
            }
        }
    }

    #[test]
    fn checkerboard_variance_exceeds_constant() {
        let board = Image::from_fn(8, 8, 1, |_, x, y| ((x + y) % 2) as f64);
        let flat = Image::filled(8, 8, 1, 0.5);
        let a = sharpness_map(&board, SharpnessMeasure::Variance, 1).unwrap();
        let b = sharpness_map(&flat, SharpnessMeasure::Variance, 1).unwrap();
        for y in 1..7 {
            for x in 1..7 {
                assert!(a.get(0, x, y) > b.get(0, x, y));
            }
        }
    }

    #[test]
    fn window_larger_than_image_is_an_error() {
        let img = Image::filled(5, 5, 1, 0.0);
        assert!(matches!(
            sharpness_map(&img, SharpnessMeasure::Variance, 3),
            Err(Error::TooSmall(_))
        ));
        assert!(sharpness_map(&img, SharpnessMeasure::Variance, 0).is_err());
    }

    #[test]
    fn soft_map_validation() {
        assert!(DecisionMap::soft(1, 1, 2, vec![0.25, 0.75]).is_ok());
        assert!(DecisionMap::soft(1, 1, 2, vec![0.5, 0.6]).is_err());
        assert!(DecisionMap::soft(1, 1, 2, vec![-0.5, 1.5]).is_err());
        assert!(DecisionMap::selection(2, 1, 2, vec![0, 2]).is_err());
    }

    #[test]
    fn soft_map_blends() {
        let a = Image::filled(1, 1, 1, 0.0);
        let b = Image::filled(1, 1, 1, 1.0);
        let m = DecisionMap::soft(1, 1, 2, vec![0.25, 0.75]).unwrap();
        assert_eq!(m.apply(&[a, b]).unwrap().get(0, 0, 0), 0.75);
    }

    #[test]
    fn cell_downsampling_takes_majority() {
        let m = DecisionMap::selection(4, 2, 3, vec![2, 2, 0, 1, 1, 0, 1, 0]).unwrap();
        let half = m.downsample_cells().unwrap();
        // cell 0: {2,2,1,0} -> 2; cell 1: {0,1,1,0} tie -> 0
        assert_eq!(half.indices().unwrap(), &[2, 0]);
    }
}
