//! Deterministic synthetic scenes and focus bursts for fixtures, tests and
//! benchmarks.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::Result;
use crate::filter;
use crate::image::Image;
use crate::io;
use crate::raw::{self, BayerPattern};
use crate::register::{self, AffineWarp};

/// Smooth noise: random lattice values at `spacing` px, cubic-smoothstep
/// interpolated between lattice points.
fn value_noise(w: usize, h: usize, spacing: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let gw = w / spacing + 2;
    let gh = h / spacing + 2;
    let grid: Vec<f64> = (0..gw * gh).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let inv = 1.0 / spacing as f64;
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let gy = y as f64 * inv;
        let y0 = gy as usize;
        let fy = smooth(gy - y0 as f64);
        for x in 0..w {
            let gx = x as f64 * inv;
            let x0 = gx as usize;
            let fx = smooth(gx - x0 as f64);
            let a = grid[y0 * gw + x0];
            let b = grid[y0 * gw + x0 + 1];
            let c = grid[(y0 + 1) * gw + x0];
            let d = grid[(y0 + 1) * gw + x0 + 1];
            out.push((1.0 - fy) * ((1.0 - fx) * a + fx * b) + fy * ((1.0 - fx) * c + fx * d));
        }
    }
    out
}

/// A textured scene with multi-scale noise and hard-edged discs, values in
/// roughly `[0.05, 0.95]`.
pub fn natural_image(w: usize, h: usize, channels: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let octaves = [1usize, 2, 4, 8, 16, 32, 64];
    let mut base = vec![0.0; w * h];
    let mut tints = Vec::with_capacity(channels);
    for &s in &octaves {
        let amp = (s as f64).powf(0.35);
        let n = value_noise(w, h, s, &mut rng);
        for (b, v) in base.iter_mut().zip(&n) {
            *b += amp * v;
        }
    }
    for _ in 0..channels {
        tints.push(value_noise(w, h, 48, &mut rng));
    }
    let disc_count = ((w * h) as f64 / 6000.0).ceil() as usize;
    let discs: Vec<(f64, f64, f64, f64)> = (0..disc_count)
        .map(|_| {
            (
                rng.random::<f64>() * w as f64,
                rng.random::<f64>() * h as f64,
                3.0 + rng.random::<f64>() * (w.min(h) as f64 / 12.0),
                rng.random::<f64>() * 2.0 - 1.0,
            )
        })
        .collect();
    for &(cx, cy, r, level) in &discs {
        let (x0, x1) = ((cx - r).max(0.0) as usize, ((cx + r) as usize + 1).min(w));
        let (y0, y1) = ((cy - r).max(0.0) as usize, ((cy + r) as usize + 1).min(h));
        for y in y0..y1 {
            for x in x0..x1 {
                let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
                let cover = (r - d + 0.5).clamp(0.0, 1.0);
                let i = y * w + x;
                base[i] = (1.0 - cover) * base[i] + cover * 3.0 * level;
            }
        }
    }
    let (lo, hi) = base
        .iter()
        .fold((f64::MAX, f64::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = (hi - lo).max(1e-12);
    Image::from_fn(w, h, channels, |c, x, y| {
        let i = y * w + x;
        let v = (base[i] - lo) / span;
        (0.05 + 0.85 * v + 0.05 * tints[c][i]).clamp(0.0, 1.0)
    })
}

/// Smooth depth field in `[0, 1]`: a diagonal ramp bent by low-frequency
/// noise.
pub fn depth_map(w: usize, h: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_de97);
    let bend = value_noise(w, h, (w.min(h) / 3).max(2), &mut rng);
    let mut d: Vec<f64> = (0..w * h)
        .map(|i| {
            let (x, y) = ((i % w) as f64 / w as f64, (i / w) as f64 / h as f64);
            0.7 * x + 0.3 * y + 0.25 * bend[i]
        })
        .collect();
    let (lo, hi) = d
        .iter()
        .fold((f64::MAX, f64::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    d.iter_mut().for_each(|v| *v = (*v - lo) / (hi - lo).max(1e-12));
    d
}

/// Render a focus-bracketed burst: frame `i` is in focus at depth
/// `(i + 0.5) / n` and the blur radius grows linearly with the depth gap.
pub fn focus_burst(sharp: &Image, depth: &[f64], frames: usize, max_sigma: f64) -> Vec<Image> {
    let (w, h) = (sharp.width(), sharp.height());
    const STEPS: usize = 16;
    let sigmas: Vec<f64> = (0..=STEPS).map(|k| max_sigma * k as f64 / STEPS as f64).collect();
    let stack: Vec<Image> = sigmas.par_iter().map(|&s| filter::gaussian_blur(sharp, s)).collect();
    (0..frames)
        .map(|i| {
            let focus = (i as f64 + 0.5) / frames as f64;
            Image::from_fn(w, h, sharp.channels(), |c, x, y| {
                let p = y * w + x;
                let t = ((depth[p] - focus).abs() * STEPS as f64).min(STEPS as f64);
                let k = (t as usize).min(STEPS - 1);
                let f = t - k as f64;
                (1.0 - f) * stack[k].get(c, x, y) + f * stack[k + 1].get(c, x, y)
            })
        })
        .collect()
}

/// Two frames built from one sharp image: frame 0 keeps the left half sharp
/// and blurs the right, frame 1 does the opposite. Returns the seam column.
pub fn blur_split_pair(sharp: &Image, sigma: f64) -> (Vec<Image>, usize) {
    let blurred = filter::gaussian_blur(sharp, sigma);
    let seam = sharp.width() / 2;
    let pick = |left_sharp: bool| {
        Image::from_fn(sharp.width(), sharp.height(), sharp.channels(), |c, x, y| {
            if (x < seam) == left_sharp {
                sharp.get(c, x, y)
            } else {
                blurred.get(c, x, y)
            }
        })
    };
    (vec![pick(true), pick(false)], seam)
}

/// Sub-pixel drift applied to frame `i` of a fixture burst.
pub fn fixture_drift(i: usize) -> AffineWarp {
    let t = i as f64;
    AffineWarp::translation(0.35 * t * (0.9 * t).cos(), -0.25 * t + 0.15 * (1.3 * t).sin())
}

pub const FIXTURE_BLACK: u16 = 256;
pub const FIXTURE_WHITE: u16 = 4095;

/// Write a miniature raw burst: `frames` RGGB mosaics (`frame_XX.png` +
/// sidecar) with depth-dependent blur and slight drift, plus the all-sharp
/// source as `gt.png`.
pub fn write_fixture_burst(dir: &Path, size: usize, frames: usize, seed: u64) -> Result<()> {
    fs::create_dir_all(dir)?;
    let sharp = natural_image(size, size, 3, seed);
    let depth = depth_map(size, size, seed);
    let burst = focus_burst(&sharp, &depth, frames, 4.0);
    let written: Vec<Result<()>> = burst
        .par_iter()
        .enumerate()
        .map(|(i, frame)| {
            let moved = register::warp_image(frame, &fixture_drift(i))?;
            let mosaic = raw::mosaic(&moved, BayerPattern::Rggb, FIXTURE_BLACK, FIXTURE_WHITE, i)?;
            raw::write_frame(
                &dir.join(format!("frame_{i:02}.png")),
                &mosaic,
                Some(200),
                Some("synthetic"),
            )
        })
        .collect();
    written.into_iter().collect::<Result<Vec<()>>>()?;
    io::write_image(&dir.join("gt.png"), &sharp)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn natural_image_is_deterministic_and_in_range() {
        let a = natural_image(64, 48, 3, 7);
        assert_eq!(a, natural_image(64, 48, 3, 7));
        assert_ne!(a, natural_image(64, 48, 3, 8));
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn focus_burst_has_one_sharp_frame_per_depth_band() {
        let sharp = natural_image(32, 32, 1, 1);
        let depth = vec![0.1; 32 * 32];
        let burst = focus_burst(&sharp, &depth, 5, 3.0);
        // frame 0 focuses at depth 0.1 exactly
        assert!(burst[0].max_abs_diff(&sharp) < 1e-12);
        assert!(burst[4].max_abs_diff(&sharp) > 1e-3);
    }
}
