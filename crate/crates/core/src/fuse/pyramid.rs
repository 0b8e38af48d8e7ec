//! Burt–Adelson Laplacian pyramid.

use crate::error::{Error, Result};
use crate::filter;
use crate::image::Image;

/// Detail bands from fine to coarse, followed by the low-pass residual.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianPyramid {
    pub bands: Vec<Image>,
}

impl LaplacianPyramid {
    pub fn levels(&self) -> usize {
        self.bands.len()
    }

    pub fn residual(&self) -> &Image {
        self.bands.last().expect("pyramid has at least one band")
    }

    pub fn details(&self) -> &[Image] {
        &self.bands[..self.bands.len() - 1]
    }
}

fn map_planes(img: &Image, f: impl Fn(&[f64]) -> (Vec<f64>, usize, usize)) -> Image {
    let mut planes = Vec::with_capacity(img.channels());
    let (mut w, mut h) = (0, 0);
    for p in img.planes() {
        let (q, qw, qh) = f(p);
        planes.push(q);
        w = qw;
        h = qh;
    }
    Image::from_planes(w, h, planes).expect("planes share a shape")
}

pub fn reduce_image(img: &Image) -> Image {
    map_planes(img, |p| filter::reduce(p, img.width(), img.height()))
}

pub fn expand_image(img: &Image, w: usize, h: usize) -> Image {
    map_planes(img, |p| (filter::expand(p, img.width(), img.height(), w, h), w, h))
}

pub fn check_depth(width: usize, height: usize, levels: usize) -> Result<()> {
    if levels < 1 {
        return Err(Error::InvalidParameter("pyramid needs at least one level".into()));
    }
    if levels > 31 || width.min(height) < 1usize << (levels - 1) {
        return Err(Error::TooSmall(format!(
            "{width}x{height} cannot hold {levels} pyramid levels"
        )));
    }
    Ok(())
}

pub fn build_laplacian_pyramid(image: &Image, levels: usize) -> Result<LaplacianPyramid> {
    check_depth(image.width(), image.height(), levels)?;
    let mut bands = Vec::with_capacity(levels);
    let mut current = image.clone();
    for _ in 1..levels {
        let coarse = reduce_image(&current);
        let up = expand_image(&coarse, current.width(), current.height());
        let mut detail = current;
        for (d, u) in detail.data_mut().iter_mut().zip(up.data()) {
            *d -= u;
        }
        bands.push(detail);
        current = coarse;
    }
    bands.push(current);
    Ok(LaplacianPyramid { bands })
}

pub fn collapse_laplacian_pyramid(pyramid: &LaplacianPyramid) -> Result<Image> {
    let mut iter = pyramid.bands.iter().rev();
    let mut img = iter
        .next()
        .ok_or_else(|| Error::InvalidParameter("empty pyramid".into()))?
        .clone();
    for band in iter {
        let expected = (band.width().div_ceil(2), band.height().div_ceil(2), band.channels());
        if (img.width(), img.height(), img.channels()) != expected {
            return Err(Error::mismatch(
                format!("{}x{}x{}", expected.0, expected.1, expected.2),
                img.shape_string(),
            ));
        }
        let mut up = expand_image(&img, band.width(), band.height());
        for (u, d) in up.data_mut().iter_mut().zip(band.data()) {
            *u += d;
        }
        img = up;
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_level_is_the_image() {
        let img = Image::from_fn(5, 4, 2, |c, x, y| (c + x * y) as f64);
        let p = build_laplacian_pyramid(&img, 1).unwrap();
        assert_eq!(p.bands, vec![img]);
    }

    #[test]
    fn rejects_too_deep() {
        assert!(matches!(
            build_laplacian_pyramid(&Image::new(7, 16, 1), 4),
            Err(Error::TooSmall(_))
        ));
        assert!(build_laplacian_pyramid(&Image::new(8, 16, 1), 4).is_ok());
    }

    #[test]
    fn inconsistent_bands_are_rejected() {
        let p = LaplacianPyramid {
            bands: vec![Image::new(8, 8, 1), Image::new(3, 4, 1)],
        };
        assert!(collapse_laplacian_pyramid(&p).is_err());
    }

    #[test]
    fn zero_pyramid_collapses_to_zero() {
        let p = LaplacianPyramid {
            bands: vec![Image::new(9, 7, 3), Image::new(5, 4, 3), Image::new(3, 2, 3)],
        };
        let out = collapse_laplacian_pyramid(&p).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
        assert_eq!(out.shape_string(), "9x7x3");
    }
}
