//! ECC (enhanced correlation coefficient) registration of burst frames.
//!
//! A warp maps coordinates of a moving frame onto the reference frame, so
//! the aligned frame is `warp_image(moving, warp)`. Pairs are aligned
//! coarse-to-fine with forward-additive ECC iterations and composed toward
//! frame 0.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter;
use crate::image::Image;
use crate::raw::PlanarRaw;

/// 2×3 affine transform `(x, y) -> (a11 x + a12 y + tx, a21 x + a22 y + ty)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineWarp {
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Default for AffineWarp {
    fn default() -> Self {
        Self::identity()
    }
}

impl AffineWarp {
    pub const fn identity() -> Self {
        AffineWarp {
            a11: 1.0,
            a12: 0.0,
            a21: 0.0,
            a22: 1.0,
            tx: 0.0,
            ty: 0.0,
        }
    }

    pub const fn translation(tx: f64, ty: f64) -> Self {
        AffineWarp {
            tx,
            ty,
            ..Self::identity()
        }
    }

    /// Rotation by `degrees` and uniform `scale` about `(cx, cy)`, followed
    /// by a translation.
    pub fn similarity(degrees: f64, scale: f64, cx: f64, cy: f64, tx: f64, ty: f64) -> Self {
        let (s, c) = degrees.to_radians().sin_cos();
        let (a11, a12, a21, a22) = (scale * c, -scale * s, scale * s, scale * c);
        AffineWarp {
            a11,
            a12,
            a21,
            a22,
            tx: cx - a11 * cx - a12 * cy + tx,
            ty: cy - a21 * cx - a22 * cy + ty,
        }
    }

    /// Row-major `[a11, a12, tx, a21, a22, ty]`, the layout of `warps.json`.
    pub fn to_row_major(&self) -> [f64; 6] {
        [self.a11, self.a12, self.tx, self.a21, self.a22, self.ty]
    }

    pub fn from_row_major(p: [f64; 6]) -> Self {
        AffineWarp {
            a11: p[0],
            a12: p[1],
            tx: p[2],
            a21: p[3],
            a22: p[4],
            ty: p[5],
        }
    }

    pub fn determinant(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.a11 * x + self.a12 * y + self.tx,
            self.a21 * x + self.a22 * y + self.ty,
        )
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &AffineWarp) -> AffineWarp {
        AffineWarp {
            a11: self.a11 * other.a11 + self.a12 * other.a21,
            a12: self.a11 * other.a12 + self.a12 * other.a22,
            a21: self.a21 * other.a11 + self.a22 * other.a21,
            a22: self.a21 * other.a12 + self.a22 * other.a22,
            tx: self.a11 * other.tx + self.a12 * other.ty + self.tx,
            ty: self.a21 * other.tx + self.a22 * other.ty + self.ty,
        }
    }

    pub fn inverse(&self) -> Result<AffineWarp> {
        let det = self.determinant();
        if !det.is_finite() || det.abs() < 1e-12 {
            return Err(Error::SingularWarp(det));
        }
        let (a11, a12, a21, a22) = (self.a22 / det, -self.a12 / det, -self.a21 / det, self.a11 / det);
        Ok(AffineWarp {
            a11,
            a12,
            a21,
            a22,
            tx: -(a11 * self.tx + a12 * self.ty),
            ty: -(a21 * self.tx + a22 * self.ty),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.to_row_major().iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &AffineWarp) -> f64 {
        self.to_row_major()
            .iter()
            .zip(other.to_row_major())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Express `warp` in coordinates scaled by `s`: `S ∘ warp ∘ S⁻¹`.
///
/// The linear part is unchanged and the translation is multiplied by `s`.
pub fn scale_warp(warp: &AffineWarp, s: f64) -> Result<AffineWarp> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "scale factor must be positive, got {s}"
        )));
    }
    Ok(AffineWarp {
        tx: warp.tx * s,
        ty: warp.ty * s,
        ..*warp
    })
}

#[inline]
fn bilinear(plane: &[f64], w: usize, h: usize, x: f64, y: f64) -> f64 {
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let x0 = (x.floor() as usize).min(w - 1);
    let y0 = (y.floor() as usize).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let top = (1.0 - fx) * plane[y0 * w + x0] + fx * plane[y0 * w + x1];
    let bottom = (1.0 - fx) * plane[y1 * w + x0] + fx * plane[y1 * w + x1];
    (1.0 - fy) * top + fy * bottom
}

/// Resample `image` so that `output(x) = input(warp⁻¹(x))`, bilinearly, with
/// edge replication outside the source.
pub fn warp_image(image: &Image, warp: &AffineWarp) -> Result<Image> {
    let inv = warp.inverse()?;
    let (w, h) = (image.width(), image.height());
    let planes = image
        .planes()
        .map(|plane| {
            let mut out = vec![0.0; w * h];
            out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
                for (x, o) in row.iter_mut().enumerate() {
                    let (sx, sy) = inv.apply(x as f64, y as f64);
                    *o = bilinear(plane, w, h, sx, sy);
                }
            });
            out
        })
        .collect();
    Image::from_planes(w, h, planes)
}

/// Apply a full-resolution warp to packed raw planes (all four planes share
/// the half-scale warp).
pub fn warp_planar(raw: &PlanarRaw, warp: &AffineWarp) -> Result<PlanarRaw> {
    let half = scale_warp(warp, 0.5)?;
    PlanarRaw::new(warp_image(&raw.image, &half)?, raw.pattern)
}

/// Registration hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EccConfig {
    pub pyramid_levels: usize,
    pub max_iterations: usize,
    pub epsilon: f64,
    pub pre_blur_sigma: f64,
}

impl Default for EccConfig {
    fn default() -> Self {
        EccConfig {
            pyramid_levels: 4,
            max_iterations: 200,
            epsilon: 1e-6,
            pre_blur_sigma: 1.0,
        }
    }
}

impl EccConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pyramid_levels < 1 {
            return Err(Error::InvalidParameter("pyramid_levels must be >= 1".into()));
        }
        if self.max_iterations < 1 {
            return Err(Error::InvalidParameter("max_iterations must be >= 1".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParameter("epsilon must be > 0".into()));
        }
        if !(self.pre_blur_sigma >= 0.0) {
            return Err(Error::InvalidParameter("pre_blur_sigma must be >= 0".into()));
        }
        Ok(())
    }
}

/// Smallest side, in pixels, allowed at the coarsest pyramid level.
pub const MIN_LEVEL_SIZE: usize = 8;

/// Outcome of one pairwise alignment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EccOutcome {
    /// Maps moving-frame coordinates onto template coordinates.
    pub warp: AffineWarp,
    /// Correlation coefficient achieved at the finest level.
    pub rho: f64,
    /// Iterations spent at the finest level.
    pub iterations: usize,
}

struct Level {
    w: usize,
    h: usize,
    template: Vec<f64>,
    // moving intensity and its x/y gradients, interleaved per pixel
    moving: Vec<[f64; 3]>,
}

fn gradients(plane: &[f64], w: usize, h: usize) -> Vec<[f64; 3]> {
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let gx = if w < 2 {
                0.0
            } else if x == 0 {
                plane[y * w + 1] - plane[y * w]
            } else if x == w - 1 {
                plane[y * w + x] - plane[y * w + x - 1]
            } else {
                0.5 * (plane[y * w + x + 1] - plane[y * w + x - 1])
            };
            let gy = if h < 2 {
                0.0
            } else if y == 0 {
                plane[w + x] - plane[x]
            } else if y == h - 1 {
                plane[y * w + x] - plane[(y - 1) * w + x]
            } else {
                0.5 * (plane[(y + 1) * w + x] - plane[(y - 1) * w + x])
            };
            out.push([plane[y * w + x], gx, gy]);
        }
    }
    out
}

#[inline]
fn sample3(m: &[[f64; 3]], w: usize, x: f64, y: f64) -> [f64; 3] {
    // caller guarantees 0 <= x <= w-1, 0 <= y <= h-1
    let x0 = x as usize;
    let y0 = y as usize;
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let x1 = if fx > 0.0 { x0 + 1 } else { x0 };
    let y1 = if fy > 0.0 { y0 + 1 } else { y0 };
    let (a, b, c, d) = (m[y0 * w + x0], m[y0 * w + x1], m[y1 * w + x0], m[y1 * w + x1]);
    let w00 = (1.0 - fx) * (1.0 - fy);
    let w10 = fx * (1.0 - fy);
    let w01 = (1.0 - fx) * fy;
    let w11 = fx * fy;
    [
        w00 * a[0] + w10 * b[0] + w01 * c[0] + w11 * d[0],
        w00 * a[1] + w10 * b[1] + w01 * c[1] + w11 * d[1],
        w00 * a[2] + w10 * b[2] + w01 * c[2] + w11 * d[2],
    ]
}

/// Solve the symmetric 6×6 system `a · x = b` by Gaussian elimination with
/// partial pivoting.
fn solve6(mut a: [[f64; 6]; 6], mut b: [f64; 6]) -> Option<[f64; 6]> {
    for col in 0..6 {
        let pivot = (col..6).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 || !a[pivot][col].is_finite() {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..6 {
            let f = a[row][col] / a[col][col];
            for k in col..6 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 6];
    for row in (0..6).rev() {
        let mut s = b[row];
        for k in row + 1..6 {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}

struct Iteration {
    delta: [f64; 6],
    rho: f64,
}

/// One forward-additive ECC update of `m` (template -> moving coordinates).
fn ecc_step(level: &Level, m: &[f64; 6]) -> Result<Iteration> {
    let (w, h) = (level.w, level.h);
    let (wmax, hmax) = ((w - 1) as f64, (h - 1) as f64);
    let mut hess = [0.0f64; 21];
    let mut jt_i = [0.0f64; 6];
    let mut jt_t = [0.0f64; 6];
    let mut j_sum = [0.0f64; 6];
    let (mut n, mut s_i, mut s_t, mut s_ii, mut s_tt, mut s_it) = (0usize, 0.0, 0.0, 0.0, 0.0, 0.0);

    for y in 0..h {
        let yf = y as f64;
        let row_u = m[1] * yf + m[2];
        let row_v = m[4] * yf + m[5];
        for x in 0..w {
            let xf = x as f64;
            let u = m[0] * xf + row_u;
            let v = m[3] * xf + row_v;
            if !(u >= 0.0 && u <= wmax && v >= 0.0 && v <= hmax) {
                continue;
            }
            let [iv, gx, gy] = sample3(&level.moving, w, u, v);
            let tv = level.template[y * w + x];
            let j = [gx * xf, gx * yf, gx, gy * xf, gy * yf, gy];
            let mut k = 0;
            for a in 0..6 {
                for b in a..6 {
                    hess[k] += j[a] * j[b];
                    k += 1;
                }
                jt_i[a] += j[a] * iv;
                jt_t[a] += j[a] * tv;
                j_sum[a] += j[a];
            }
            n += 1;
            s_i += iv;
            s_t += tv;
            s_ii += iv * iv;
            s_tt += tv * tv;
            s_it += iv * tv;
        }
    }
    if n < 16 {
        return Err(Error::Divergence(format!(
            "only {n} template pixels overlap the warped image"
        )));
    }
    let nf = n as f64;
    let (mean_i, mean_t) = (s_i / nf, s_t / nf);
    let img_norm2 = s_ii - nf * mean_i * mean_i;
    let tmp_norm2 = s_tt - nf * mean_t * mean_t;
    let correlation = s_it - nf * mean_i * mean_t;
    // a flat image has no usable structure (std below 1e-8 per pixel)
    if !(img_norm2 > nf * 1e-16 && tmp_norm2 > nf * 1e-16) {
        return Err(Error::Divergence("image without contrast in the overlap".into()));
    }
    let rho = correlation / (img_norm2 * tmp_norm2).sqrt();

    let mut hm = [[0.0; 6]; 6];
    let mut k = 0;
    for a in 0..6 {
        for b in a..6 {
            hm[a][b] = hess[k];
            hm[b][a] = hess[k];
            k += 1;
        }
    }
    let mut ip = [0.0; 6];
    let mut tp = [0.0; 6];
    for a in 0..6 {
        ip[a] = jt_i[a] - mean_i * j_sum[a];
        tp[a] = jt_t[a] - mean_t * j_sum[a];
    }
    let ip_h = solve6(hm, ip).ok_or_else(|| Error::Divergence("singular ECC Hessian".into()))?;
    let dot = |a: &[f64; 6], b: &[f64; 6]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let lambda_n = img_norm2 - dot(&ip, &ip_h);
    let lambda_d = correlation - dot(&tp, &ip_h);
    if !(lambda_d > 0.0) {
        return Err(Error::Divergence(format!(
            "images are uncorrelated (rho {rho:.4}, lambda denominator {lambda_d:e})"
        )));
    }
    let lambda = lambda_n / lambda_d;
    let mut err_proj = [0.0; 6];
    for a in 0..6 {
        err_proj[a] = lambda * tp[a] - ip[a];
    }
    let delta = solve6(hm, err_proj).ok_or_else(|| Error::Divergence("singular ECC Hessian".into()))?;
    if !delta.iter().all(|d| d.is_finite()) || !rho.is_finite() {
        return Err(Error::Divergence("non-finite ECC update".into()));
    }
    Ok(Iteration { delta, rho })
}

fn build_levels(template: &Image, moving: &Image, cfg: &EccConfig) -> Vec<Level> {
    let (w, h) = (template.width(), template.height());
    let mut t = filter::gaussian_blur_plane(template.plane(0), w, h, cfg.pre_blur_sigma);
    let mut m = filter::gaussian_blur_plane(moving.plane(0), w, h, cfg.pre_blur_sigma);
    let (mut lw, mut lh) = (w, h);
    let mut levels = Vec::with_capacity(cfg.pyramid_levels);
    for k in 0..cfg.pyramid_levels {
        if k > 0 {
            let (t2, cw, ch) = filter::reduce(&t, lw, lh);
            let (m2, _, _) = filter::reduce(&m, lw, lh);
            t = t2;
            m = m2;
            lw = cw;
            lh = ch;
        }
        levels.push(Level {
            w: lw,
            h: lh,
            template: t.clone(),
            moving: gradients(&m, lw, lh),
        });
    }
    levels
}

/// Find the warp that maximizes the correlation coefficient between the
/// template and the warped moving image.
///
/// `init` and the returned warp map moving-frame coordinates to template
/// coordinates, so `warp_image(moving, &outcome.warp)` is aligned with the
/// template.
pub fn ecc_align(template: &Image, moving: &Image, init: &AffineWarp, cfg: &EccConfig) -> Result<EccOutcome> {
    cfg.validate()?;
    if template.channels() != 1 || moving.channels() != 1 {
        return Err(Error::mismatch("single-channel images", "multi-channel input"));
    }
    template.ensure_same_shape(moving)?;
    let min_side = template.width().min(template.height());
    let factor = 1usize << (cfg.pyramid_levels - 1);
    if min_side / factor < MIN_LEVEL_SIZE {
        return Err(Error::TooSmall(format!(
            "{}x{} cannot hold {} pyramid levels (coarsest side must be >= {MIN_LEVEL_SIZE})",
            template.width(),
            template.height(),
            cfg.pyramid_levels
        )));
    }
    let levels = build_levels(template, moving, cfg);

    // the iterations estimate the inverse map: template -> moving coordinates
    let fine = init.inverse()?;
    let coarse_scale = 1.0 / factor as f64;
    let mut m = scale_warp(&fine, coarse_scale)?.to_row_major();
    let mut rho = f64::NAN;
    let mut iterations = 0;
    for (k, level) in levels.iter().enumerate().rev() {
        iterations = 0;
        for _ in 0..cfg.max_iterations {
            let step = ecc_step(level, &m)?;
            iterations += 1;
            rho = step.rho;
            for (p, d) in m.iter_mut().zip(step.delta) {
                *p += d;
            }
            let norm = step.delta.iter().map(|d| d * d).sum::<f64>().sqrt();
            if norm < cfg.epsilon {
                break;
            }
        }
        if k > 0 {
            m = scale_warp(&AffineWarp::from_row_major(m), 2.0)?.to_row_major();
        }
    }
    let estimate = AffineWarp::from_row_major(m);
    if !estimate.is_finite() {
        return Err(Error::Divergence("non-finite warp".into()));
    }
    Ok(EccOutcome {
        warp: estimate.inverse()?,
        rho,
        iterations,
    })
}

/// Per-frame registration outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRegistration {
    pub index: usize,
    /// Frame `i` -> frame `i-1` coordinates (identity for the reference).
    pub pairwise: AffineWarp,
    /// Frame `i` -> reference coordinates.
    pub cumulative: AffineWarp,
    /// Correlation of the pair; NaN flags a diverged pair whose warp fell
    /// back to identity.
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationResult {
    pub reference: usize,
    pub frames: Vec<FrameRegistration>,
    pub config: EccConfig,
}

impl RegistrationResult {
    pub fn warps(&self) -> Vec<AffineWarp> {
        self.frames.iter().map(|f| f.cumulative).collect()
    }

    pub fn rhos(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.rho).collect()
    }

    pub fn diverged(&self) -> Vec<usize> {
        self.frames.iter().filter(|f| f.rho.is_nan()).map(|f| f.index).collect()
    }

    pub fn to_file(&self) -> WarpFile {
        WarpFile {
            reference: self.reference,
            frames: self
                .frames
                .iter()
                .map(|f| WarpRecord {
                    index: f.index,
                    pairwise: f.pairwise.to_row_major(),
                    cumulative: f.cumulative.to_row_major(),
                    rho: if f.rho.is_finite() { Some(f.rho) } else { None },
                })
                .collect(),
            config: Some(self.config),
        }
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(&self.to_file())?)?;
        Ok(())
    }
}

/// On-disk `warps.json` layout. A `null` rho marks a diverged pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpFile {
    pub reference: usize,
    pub frames: Vec<WarpRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<EccConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpRecord {
    pub index: usize,
    pub pairwise: [f64; 6],
    pub cumulative: [f64; 6],
    pub rho: Option<f64>,
}

impl WarpFile {
    pub fn read(path: &Path) -> Result<WarpFile> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }

    pub fn cumulative(&self) -> Vec<AffineWarp> {
        self.frames
            .iter()
            .map(|f| AffineWarp::from_row_major(f.cumulative))
            .collect()
    }
}

/// Align every frame to its predecessor and compose the pairwise warps
/// toward frame 0.
///
/// Pairs are independent (each is seeded with the identity) and run in
/// parallel. A diverged pair contributes an identity warp and a NaN rho.
pub fn register_burst(frames: &[Image], cfg: &EccConfig) -> Result<RegistrationResult> {
    cfg.validate()?;
    let first = frames
        .first()
        .ok_or_else(|| Error::InvalidParameter("empty burst".into()))?;
    for f in frames {
        first.ensure_same_shape(f)?;
    }
    let pairs: Vec<Result<EccOutcome>> = (1..frames.len())
        .into_par_iter()
        .map(|i| ecc_align(&frames[i - 1], &frames[i], &AffineWarp::identity(), cfg))
        .collect();

    let mut out = Vec::with_capacity(frames.len());
    out.push(FrameRegistration {
        index: 0,
        pairwise: AffineWarp::identity(),
        cumulative: AffineWarp::identity(),
        rho: 1.0,
    });
    let mut cumulative = AffineWarp::identity();
    for (i, pair) in pairs.into_iter().enumerate() {
        let index = i + 1;
        let (pairwise, rho) = match pair {
            Ok(o) => (o.warp, o.rho),
            Err(e @ (Error::Divergence(_) | Error::SingularWarp(_))) => {
                log::warn!("pair {index}->{}: {e}; falling back to identity", index - 1);
                (AffineWarp::identity(), f64::NAN)
            }
            Err(e) => return Err(e),
        };
        cumulative = cumulative.compose(&pairwise);
        out.push(FrameRegistration {
            index,
            pairwise,
            cumulative,
            rho,
        });
    }
    Ok(RegistrationResult {
        reference: 0,
        frames: out,
        config: *cfg,
    })
}

/// Resample every frame onto the reference grid.
pub fn align_frames(frames: &[Image], warps: &[AffineWarp]) -> Result<Vec<Image>> {
    if frames.len() != warps.len() {
        return Err(Error::mismatch(
            format!("{} warps", frames.len()),
            format!("{} warps", warps.len()),
        ));
    }
    frames.par_iter().zip(warps).map(|(f, w)| warp_image(f, w)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn warp_strategy() -> impl Strategy<Value = AffineWarp> {
        (
            -0.3f64..0.3,
            -0.3f64..0.3,
            -0.3f64..0.3,
            -0.3f64..0.3,
            -20.0f64..20.0,
            -20.0f64..20.0,
        )
            .prop_map(|(a, b, c, d, tx, ty)| AffineWarp {
                a11: 1.0 + a,
                a12: b,
                a21: c,
                a22: 1.0 + d,
                tx,
                ty,
            })
    }

    fn mat3(w: &AffineWarp) -> [[f64; 3]; 3] {
        [[w.a11, w.a12, w.tx], [w.a21, w.a22, w.ty], [0.0, 0.0, 1.0]]
    }

    fn matmul(a: [[f64; 3]; 3], b: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
        let mut c = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    c[i][j] += a[i][k] * b[k][j];
                }
            }
        }
        c
    }

    #[test]
    fn identity_fields() {
        let id = AffineWarp::identity();
        assert_eq!(id.to_row_major(), [1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(id.determinant(), 1.0);
    }

    #[test]
    fn scale_warp_examples() {
        assert_eq!(
            scale_warp(&AffineWarp::identity(), 0.5).unwrap(),
            AffineWarp::identity()
        );
        let t = scale_warp(&AffineWarp::translation(4.0, 6.0), 0.5).unwrap();
        assert_eq!(t, AffineWarp::translation(2.0, 3.0));
        assert!(scale_warp(&AffineWarp::identity(), 0.0).is_err());
        assert!(scale_warp(&AffineWarp::identity(), -1.0).is_err());
    }

    #[test]
    fn scale_warp_matches_matrix_conjugation() {
        let w = AffineWarp::similarity(10.0, 1.0, 0.0, 0.0, 4.0, 6.0);
        let s = 0.5;
        let sm = [[s, 0.0, 0.0], [0.0, s, 0.0], [0.0, 0.0, 1.0]];
        let sinv = [[1.0 / s, 0.0, 0.0], [0.0, 1.0 / s, 0.0], [0.0, 0.0, 1.0]];
        let expect = matmul(matmul(sm, mat3(&w)), sinv);
        let got = mat3(&scale_warp(&w, s).unwrap());
        for i in 0..3 {
            for j in 0..3 {
                assert!((expect[i][j] - got[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn singular_warp_is_rejected() {
        let w = AffineWarp {
            a11: 1.0,
            a12: 2.0,
            a21: 2.0,
            a22: 4.0,
            tx: 0.0,
            ty: 0.0,
        };
        assert!(matches!(w.inverse(), Err(Error::SingularWarp(_))));
        assert!(warp_image(&Image::new(4, 4, 1), &w).is_err());
    }

    #[test]
    fn identity_warp_is_bit_exact() {
        let img = Image::from_fn(9, 7, 3, |c, x, y| ((c * 31 + x * 7 + y * 13) % 17) as f64 / 16.0);
        assert_eq!(warp_image(&img, &AffineWarp::identity()).unwrap(), img);
    }

    #[test]
    fn integer_translation_shifts_content() {
        let img = Image::from_fn(9, 7, 1, |_, x, y| ((x * 7 + y * 13) % 17) as f64 / 16.0);
        let out = warp_image(&img, &AffineWarp::translation(1.0, 0.0)).unwrap();
        for y in 0..7 {
            for x in 1..9 {
                assert_eq!(out.get(0, x, y), img.get(0, x - 1, y));
            }
        }
    }

    #[test]
    fn solve6_recovers_known_solution() {
        let mut a = [[0.0; 6]; 6];
        for i in 0..6 {
            for j in 0..6 {
                a[i][j] = 1.0 / (1.0 + i as f64 + j as f64) + if i == j { 1.0 } else { 0.0 };
            }
        }
        let x = [1.0, -2.0, 3.0, 0.5, -0.25, 2.0];
        let mut b = [0.0; 6];
        for i in 0..6 {
            b[i] = (0..6).map(|j| a[i][j] * x[j]).sum();
        }
        let got = solve6(a, b).unwrap();
        for i in 0..6 {
            assert!((got[i] - x[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn ecc_rejects_too_deep_pyramids() {
        let img = Image::filled(32, 32, 1, 0.5);
        let cfg = EccConfig {
            pyramid_levels: 4,
            ..Default::default()
        };
        assert!(matches!(
            ecc_align(&img, &img, &AffineWarp::identity(), &cfg),
            Err(Error::TooSmall(_))
        ));
    }

    #[test]
    fn warps_json_round_trip_keeps_nan_flag() {
        let result = RegistrationResult {
            reference: 0,
            frames: vec![
                FrameRegistration {
                    index: 0,
                    pairwise: AffineWarp::identity(),
                    cumulative: AffineWarp::identity(),
                    rho: 1.0,
                },
                FrameRegistration {
                    index: 1,
                    pairwise: AffineWarp::identity(),
                    cumulative: AffineWarp::identity(),
                    rho: f64::NAN,
                },
            ],
            config: EccConfig::default(),
        };
        let json = serde_json::to_value(result.to_file()).unwrap();
        assert_eq!(json["reference"], 0);
        assert_eq!(json["frames"][1]["rho"], serde_json::Value::Null);
        assert_eq!(
            json["frames"][0]["pairwise"],
            serde_json::json!([1.0, 0.0, 0.0, 0.0, 1.0, 0.0])
        );
        let back: WarpFile = serde_json::from_value(json).unwrap();
        assert_eq!(back, result.to_file());
    }

    proptest! {
        #[test]
        fn compose_with_identity_is_exact(w in warp_strategy()) {
            let id = AffineWarp::identity();
            prop_assert_eq!(w.compose(&id), w);
            prop_assert_eq!(id.compose(&w), w);
        }

        #[test]
        fn compose_is_associative(a in warp_strategy(), b in warp_strategy(), c in warp_strategy()) {
            let left = a.compose(&b).compose(&c);
            let right = a.compose(&b.compose(&c));
            prop_assert!(left.max_abs_diff(&right) < 1e-9);
        }

        #[test]
        fn scale_round_trip(w in warp_strategy(), s in 0.01f64..100.0) {
            let back = scale_warp(&scale_warp(&w, s).unwrap(), 1.0 / s).unwrap();
            prop_assert!(back.max_abs_diff(&w) < 1e-12);
        }

        #[test]
        fn inverse_composes_to_identity(w in warp_strategy()) {
            let id = w.compose(&w.inverse().unwrap());
            prop_assert!(id.max_abs_diff(&AffineWarp::identity()) < 1e-12);
        }
    }
}
