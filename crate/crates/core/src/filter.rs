//! Small raster kernels shared by registration and fusion. All borders use
//! edge replication.

use crate::image::Image;

/// Five-tap binomial low-pass used by the Burt pyramid REDUCE/EXPAND pair.
pub const BINOMIAL5: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

#[inline]
pub(crate) fn clamp_index(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// Normalized sampled Gaussian truncated at three standard deviations.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable correlation of one plane with odd-length kernels.
pub fn convolve_separable(plane: &[f64], w: usize, h: usize, kx: &[f64], ky: &[f64]) -> Vec<f64> {
    let rx = (kx.len() / 2) as isize;
    let ry = (ky.len() / 2) as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        let out = &mut tmp[y * w..(y + 1) * w];
        for (x, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (i, k) in kx.iter().enumerate() {
                acc += k * row[clamp_index(x as isize + i as isize - rx, w)];
            }
            *o = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for (i, k) in ky.iter().enumerate() {
        for y in 0..h {
            let sy = clamp_index(y as isize + i as isize - ry, h);
            let src = &tmp[sy * w..(sy + 1) * w];
            let dst = &mut out[y * w..(y + 1) * w];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += k * s;
            }
        }
    }
    out
}

pub fn gaussian_blur_plane(plane: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return plane.to_vec();
    }
    let k = gaussian_kernel(sigma);
    convolve_separable(plane, w, h, &k, &k)
}

pub fn gaussian_blur(img: &Image, sigma: f64) -> Image {
    let (w, h) = (img.width(), img.height());
    let planes = img.planes().map(|p| gaussian_blur_plane(p, w, h, sigma)).collect();
    Image::from_planes(w, h, planes).expect("blur preserves shape")
}

/// Mean over the `(2r+1)²` window around every pixel (replicated border).
pub fn box_mean(plane: &[f64], w: usize, h: usize, radius: usize) -> Vec<f64> {
    let k = vec![1.0 / (2 * radius + 1) as f64; 2 * radius + 1];
    convolve_separable(plane, w, h, &k, &k)
}

/// One Burt REDUCE step: binomial blur followed by keeping even samples.
pub fn reduce(plane: &[f64], w: usize, h: usize) -> (Vec<f64>, usize, usize) {
    let blurred = convolve_separable(plane, w, h, &BINOMIAL5, &BINOMIAL5);
    let (cw, ch) = (w.div_ceil(2), h.div_ceil(2));
    let mut out = Vec::with_capacity(cw * ch);
    for y in 0..ch {
        for x in 0..cw {
            out.push(blurred[2 * y * w + 2 * x]);
        }
    }
    (out, cw, ch)
}

/// One Burt EXPAND step from a `cw×ch` plane to `w×h`.
///
/// Each output sample interpolates the coarse samples that land on it after
/// zero insertion, weighted by twice the binomial taps so constants survive.
pub fn expand(coarse: &[f64], cw: usize, ch: usize, w: usize, h: usize) -> Vec<f64> {
    let mut tmp = vec![0.0; cw * h];
    for y in 0..h {
        for x in 0..cw {
            tmp[y * cw + x] = expand_tap(y, ch, |i| coarse[i * cw + x]);
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let row = &tmp[y * cw..(y + 1) * cw];
        for x in 0..w {
            out[y * w + x] = expand_tap(x, cw, |i| row[i]);
        }
    }
    out
}

#[inline]
fn expand_tap(pos: usize, n: usize, sample: impl Fn(usize) -> f64) -> f64 {
    let mut acc = 0.0;
    for m in -2isize..=2 {
        let src = pos as isize - m;
        if src.rem_euclid(2) != 0 {
            continue;
        }
        acc += 2.0 * BINOMIAL5[(m + 2) as usize] * sample(clamp_index(src / 2, n));
    }
    acc
}

/// Response of the 4-neighbour discrete Laplacian.
pub fn laplacian3x3(plane: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let up = y.saturating_sub(1);
        let down = (y + 1).min(h - 1);
        for x in 0..w {
            let left = x.saturating_sub(1);
            let right = (x + 1).min(w - 1);
            let c = plane[y * w + x];
            out[y * w + x] =
                plane[y * w + left] + plane[y * w + right] + plane[up * w + x] + plane[down * w + x] - 4.0 * c;
        }
    }
    out
}

/// Replace every label by the most frequent label in its `(2r+1)²`
/// neighbourhood; ties go to the lower label.
pub fn majority_filter(labels: &[u16], w: usize, h: usize, radius: usize, n_labels: usize) -> Vec<u16> {
    if radius == 0 || n_labels <= 1 {
        return labels.to_vec();
    }
    let mut best = vec![0u16; w * h];
    let mut best_count = vec![-1.0f64; w * h];
    let mut indicator = vec![0.0; w * h];
    for label in 0..n_labels {
        let mut any = false;
        for (ind, &l) in indicator.iter_mut().zip(labels) {
            *ind = if l as usize == label { 1.0 } else { 0.0 };
            any |= l as usize == label;
        }
        if !any {
            continue;
        }
        let counts = box_sum_exact(&indicator, w, h, radius);
        for i in 0..w * h {
            if counts[i] > best_count[i] {
                best_count[i] = counts[i];
                best[i] = label as u16;
            }
        }
    }
    best
}

/// Window sums with replicated borders; exact for small integer inputs.
fn box_sum_exact(plane: &[f64], w: usize, h: usize, radius: usize) -> Vec<f64> {
    let k = vec![1.0; 2 * radius + 1];
    convolve_separable(plane, w, h, &k, &k)
}
