//! Separable 2-D transform with the symmetric complex Daubechies filter of
//! length 6 (three vanishing moments), periodized so the transform is
//! unitary and reconstructs exactly.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::image::Image;

const fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Orthonormal low-pass analysis filter, normalized to sum to √2 and
/// symmetric (`h[k] == h[5 - k]`).
pub const SDW6_LOWPASS: [Complex64; 6] = [
    c(-0.066_291_260_736_238_82, 0.085_581_649_610_182_2),
    c(0.110_485_434_560_398_05, 0.085_581_649_610_182_2),
    c(0.662_912_607_362_388_3, -0.171_163_299_220_364_4),
    c(0.662_912_607_362_388_3, -0.171_163_299_220_364_4),
    c(0.110_485_434_560_398_05, 0.085_581_649_610_182_2),
    c(-0.066_291_260_736_238_82, 0.085_581_649_610_182_2),
];

/// Quadrature-mirror high-pass: `g[k] = (-1)^k conj(h[5 - k])`.
pub fn sdw6_highpass() -> [Complex64; 6] {
    let mut g = [Complex64::default(); 6];
    for (k, gk) in g.iter_mut().enumerate() {
        let v = SDW6_LOWPASS[5 - k].conj();
        *gk = if k % 2 == 0 { v } else { -v };
    }
    g
}

/// Subbands of one decomposition level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// High-pass along x.
    Hl,
    /// High-pass along y.
    Lh,
    Hh,
}

/// Rectangle of one subband inside the in-place coefficient layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Subband {
    pub level: usize,
    pub orientation: Option<Orientation>,
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

/// Multilevel coefficients in Mallat layout, one complex plane per channel.
///
/// The top-left `(w >> levels) × (h >> levels)` block holds the
/// approximation; level `l` details occupy the three blocks of size
/// `(w >> l) × (h >> l)` right of, below and diagonal to it.
#[derive(Debug, Clone, PartialEq)]
pub struct CdwCoefficients {
    pub levels: usize,
    /// Size of the input before symmetric padding.
    pub width: usize,
    pub height: usize,
    pub padded_width: usize,
    pub padded_height: usize,
    pub planes: Vec<Vec<Complex64>>,
}

impl CdwCoefficients {
    pub fn channels(&self) -> usize {
        self.planes.len()
    }

    pub fn approximation(&self) -> Subband {
        Subband {
            level: self.levels,
            orientation: None,
            x: 0,
            y: 0,
            width: self.padded_width >> self.levels,
            height: self.padded_height >> self.levels,
        }
    }

    /// Detail subbands, finest level first.
    pub fn detail_subbands(&self) -> Vec<Subband> {
        let mut out = Vec::with_capacity(3 * self.levels);
        for level in 1..=self.levels {
            let (w, h) = (self.padded_width >> level, self.padded_height >> level);
            for (orientation, x, y) in [
                (Orientation::Hl, w, 0),
                (Orientation::Lh, 0, h),
                (Orientation::Hh, w, h),
            ] {
                out.push(Subband {
                    level,
                    orientation: Some(orientation),
                    x,
                    y,
                    width: w,
                    height: h,
                });
            }
        }
        out
    }

    /// Copy one subband of one channel out, row-major.
    pub fn subband(&self, channel: usize, band: &Subband) -> Vec<Complex64> {
        let plane = &self.planes[channel];
        let mut out = Vec::with_capacity(band.width * band.height);
        for y in 0..band.height {
            let row = (band.y + y) * self.padded_width + band.x;
            out.extend_from_slice(&plane[row..row + band.width]);
        }
        out
    }

    #[inline]
    pub fn index(&self, band: &Subband, x: usize, y: usize) -> usize {
        (band.y + y) * self.padded_width + band.x + x
    }
}

/// Whole-sample symmetric index into `[0, n)`.
fn mirror(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let m = i % period;
    if m < n {
        m
    } else {
        period - m
    }
}

fn analyze_1d(buf: &mut [Complex64], tmp: &mut [Complex64], h: &[Complex64; 6], g: &[Complex64; 6]) {
    let n = buf.len();
    let half = n / 2;
    for k in 0..half {
        let mut a = Complex64::default();
        let mut d = Complex64::default();
        for m in 0..6 {
            let x = buf[(2 * k + m) % n];
            a += h[m].conj() * x;
            d += g[m].conj() * x;
        }
        tmp[k] = a;
        tmp[half + k] = d;
    }
    buf.copy_from_slice(&tmp[..n]);
}

fn synthesize_1d(buf: &mut [Complex64], tmp: &mut [Complex64], h: &[Complex64; 6], g: &[Complex64; 6]) {
    let n = buf.len();
    let half = n / 2;
    tmp[..n].iter_mut().for_each(|v| *v = Complex64::default());
    for k in 0..half {
        let (a, d) = (buf[k], buf[half + k]);
        for m in 0..6 {
            tmp[(2 * k + m) % n] += h[m] * a + g[m] * d;
        }
    }
    buf.copy_from_slice(&tmp[..n]);
}

/// Apply one analysis (or synthesis) level to the top-left `rw × rh` block.
fn level_2d(plane: &mut [Complex64], stride: usize, rw: usize, rh: usize, inverse: bool) {
    let h = SDW6_LOWPASS;
    let g = sdw6_highpass();
    let mut line = vec![Complex64::default(); rw.max(rh)];
    let mut tmp = vec![Complex64::default(); rw.max(rh)];
    let run = |buf: &mut [Complex64], tmp: &mut [Complex64]| {
        if inverse {
            synthesize_1d(buf, tmp, &h, &g);
        } else {
            analyze_1d(buf, tmp, &h, &g);
        }
    };
    let rows = |plane: &mut [Complex64], tmp: &mut [Complex64]| {
        for y in 0..rh {
            run(&mut plane[y * stride..y * stride + rw], tmp);
        }
    };
    let cols = |plane: &mut [Complex64], line: &mut [Complex64], tmp: &mut [Complex64]| {
        for x in 0..rw {
            for y in 0..rh {
                line[y] = plane[y * stride + x];
            }
            run(&mut line[..rh], tmp);
            for y in 0..rh {
                plane[y * stride + x] = line[y];
            }
        }
    };
    if inverse {
        cols(plane, &mut line, &mut tmp);
        rows(plane, &mut tmp);
    } else {
        rows(plane, &mut tmp);
        cols(plane, &mut line, &mut tmp);
    }
}

/// Forward transform. Sides not divisible by `2^levels` are padded by
/// symmetric extension; the padding is recorded and stripped on inverse.
pub fn cdw_forward(image: &Image, levels: usize) -> Result<CdwCoefficients> {
    if levels == 0 {
        return Err(Error::InvalidParameter("wavelet levels must be >= 1".into()));
    }
    if levels > 24 {
        return Err(Error::InvalidParameter(format!("{levels} wavelet levels")));
    }
    let (w, h) = (image.width(), image.height());
    let block = 1usize << levels;
    let (pw, ph) = (w.div_ceil(block) * block, h.div_ceil(block) * block);
    let planes = image
        .planes()
        .map(|src| {
            let mut plane = Vec::with_capacity(pw * ph);
            for y in 0..ph {
                let sy = mirror(y, h);
                for x in 0..pw {
                    plane.push(Complex64::new(src[sy * w + mirror(x, w)], 0.0));
                }
            }
            for l in 0..levels {
                level_2d(&mut plane, pw, pw >> l, ph >> l, false);
            }
            plane
        })
        .collect();
    Ok(CdwCoefficients {
        levels,
        width: w,
        height: h,
        padded_width: pw,
        padded_height: ph,
        planes,
    })
}

/// Inverse transform; returns the real part cropped to the original size.
pub fn cdw_inverse(coeffs: &CdwCoefficients) -> Result<Image> {
    let (pw, ph) = (coeffs.padded_width, coeffs.padded_height);
    if coeffs.levels == 0 {
        return Err(Error::InvalidParameter("wavelet levels must be >= 1".into()));
    }
    let block = 1usize << coeffs.levels;
    if pw % block != 0 || ph % block != 0 || coeffs.width > pw || coeffs.height > ph {
        return Err(Error::mismatch(
            format!("padded size divisible by {block}"),
            format!("{pw}x{ph}"),
        ));
    }
    let planes = coeffs
        .planes
        .iter()
        .map(|p| {
            if p.len() != pw * ph {
                return Err(Error::mismatch(pw * ph, p.len()));
            }
            let mut plane = p.clone();
            for l in (0..coeffs.levels).rev() {
                level_2d(&mut plane, pw, pw >> l, ph >> l, true);
            }
            let mut out = Vec::with_capacity(coeffs.width * coeffs.height);
            for y in 0..coeffs.height {
                out.extend(plane[y * pw..y * pw + coeffs.width].iter().map(|v| v.re));
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Image::from_planes(coeffs.width, coeffs.height, planes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filter_is_orthonormal_symmetric_with_vanishing_moments() {
        let h = SDW6_LOWPASS;
        let g = sdw6_highpass();
        for k in 0..3 {
            assert_eq!(h[k], h[5 - k]);
        }
        for shift in 0..3 {
            let hh: Complex64 = (0..6 - 2 * shift).map(|k| h[k] * h[k + 2 * shift].conj()).sum();
            let gg: Complex64 = (0..6 - 2 * shift).map(|k| g[k] * g[k + 2 * shift].conj()).sum();
            let expect = if shift == 0 { 1.0 } else { 0.0 };
            assert!((hh - expect).norm() < 1e-15, "shift {shift}: {hh}");
            assert!((gg - expect).norm() < 1e-15, "shift {shift}: {gg}");
        }
        let sum: Complex64 = h.iter().sum();
        assert!((sum - Complex64::new(2f64.sqrt(), 0.0)).norm() < 1e-15);
        for p in 0..3 {
            let moment: Complex64 = g.iter().enumerate().map(|(k, v)| v * (k as f64).powi(p)).sum();
            assert!(moment.norm() < 1e-13, "moment {p}: {moment}");
        }
    }

    #[test]
    fn mirror_indexing() {
        let idx: Vec<usize> = (0..8).map(|i| mirror(i, 3)).collect();
        assert_eq!(idx, vec![0, 1, 2, 1, 0, 1, 2, 1]);
    }

    #[test]
    fn zero_levels_rejected() {
        assert!(cdw_forward(&Image::new(8, 8, 1), 0).is_err());
    }

    #[test]
    fn odd_sizes_round_trip_through_padding() {
        let img = Image::from_fn(13, 9, 2, |c, x, y| ((c * 5 + x * 3 + y * 7) % 11) as f64 / 10.0);
        let coeffs = cdw_forward(&img, 3).unwrap();
        assert_eq!((coeffs.padded_width, coeffs.padded_height), (16, 16));
        let back = cdw_inverse(&coeffs).unwrap();
        assert!(back.max_abs_diff(&img) < 1e-12);
    }

    #[test]
    fn subband_layout_tiles_the_plane() {
        let coeffs = cdw_forward(&Image::new(32, 16, 1), 3).unwrap();
        let mut area = coeffs.approximation().width * coeffs.approximation().height;
        for b in coeffs.detail_subbands() {
            area += b.width * b.height;
        }
        assert_eq!(area, 32 * 16);
    }
}
