//! Raw Bayer ingestion, half-resolution packing and demosaicing.
//!
//! Frames arrive as a 16-bit single-channel mosaic (`.pgm` or `.png`) next to
//! a JSON sidecar of the same stem. Sample values are kept untouched in
//! [`BayerFrame`]; normalization to `[0, 1]` happens when packing or
//! demosaicing.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::io;

/// Colour of one photosite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfaColor {
    Red,
    Green,
    Blue,
}

/// Colour filter layout of the top-left 2×2 cell, read in raster order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum BayerPattern {
    Rggb,
    Bggr,
    Grbg,
    Gbrg,
}

/// Plane order of [`PlanarRaw`]: red, green of the top cell row, green of
/// the bottom cell row, blue.
pub const PLANE_NAMES: [&str; 4] = ["R", "G1", "G2", "B"];

impl BayerPattern {
    pub const ALL: [BayerPattern; 4] = [
        BayerPattern::Rggb,
        BayerPattern::Bggr,
        BayerPattern::Grbg,
        BayerPattern::Gbrg,
    ];

    /// Colour at offset `(dx, dy)` within a cell.
    pub fn color_at(self, dx: usize, dy: usize) -> CfaColor {
        use CfaColor::*;
        let cell = match self {
            BayerPattern::Rggb => [[Red, Green], [Green, Blue]],
            BayerPattern::Bggr => [[Blue, Green], [Green, Red]],
            BayerPattern::Grbg => [[Green, Red], [Blue, Green]],
            BayerPattern::Gbrg => [[Green, Blue], [Red, Green]],
        };
        cell[dy & 1][dx & 1]
    }

    /// Cell offset `(dx, dy)` feeding plane `c` of the packed layout.
    pub fn plane_offset(self, c: usize) -> (usize, usize) {
        let find = |color: CfaColor, row: Option<usize>| {
            for dy in 0..2 {
                if row.is_some_and(|r| r != dy) {
                    continue;
                }
                for dx in 0..2 {
                    if self.color_at(dx, dy) == color {
                        return (dx, dy);
                    }
                }
            }
            unreachable!("every Bayer cell holds R, B and one green per row")
        };
        match c {
            0 => find(CfaColor::Red, None),
            1 => find(CfaColor::Green, Some(0)),
            2 => find(CfaColor::Green, Some(1)),
            3 => find(CfaColor::Blue, None),
            _ => panic!("packed raw has 4 planes, got index {c}"),
        }
    }

    /// Pattern whose cell reads `cell[dy][dx]`, if it is a valid Bayer cell.
    pub fn from_cell(cell: [[CfaColor; 2]; 2]) -> Option<BayerPattern> {
        BayerPattern::ALL
            .into_iter()
            .find(|p| (0..2).all(|dy| (0..2).all(|dx| p.color_at(dx, dy) == cell[dy][dx])))
    }
}

/// Metadata sidecar stored as `<name>.json` next to each mosaic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub width: usize,
    pub height: usize,
    pub pattern: BayerPattern,
    pub black_level: u16,
    pub white_level: u16,
    #[serde(default)]
    pub frame_index: usize,
    #[serde(default)]
    pub iso: Option<u32>,
    #[serde(default)]
    pub lens: Option<String>,
}

impl Sidecar {
    pub fn read(path: &Path) -> Result<Sidecar> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }
}

/// One raw mosaic frame with its sensor levels.
#[derive(Debug, Clone, PartialEq)]
pub struct BayerFrame {
    width: usize,
    height: usize,
    samples: Vec<u16>,
    pattern: BayerPattern,
    black_level: u16,
    white_level: u16,
    frame_index: usize,
}

impl BayerFrame {
    pub fn new(
        width: usize,
        height: usize,
        samples: Vec<u16>,
        pattern: BayerPattern,
        black_level: u16,
        white_level: u16,
        frame_index: usize,
    ) -> Result<Self> {
        validate_geometry(width, height, black_level, white_level)?;
        if samples.len() != width * height {
            return Err(Error::mismatch(
                format!("{width}x{height} samples"),
                format!("{} samples", samples.len()),
            ));
        }
        Ok(BayerFrame {
            width,
            height,
            samples,
            pattern,
            black_level,
            white_level,
            frame_index,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn samples(&self) -> &[u16] {
        &self.samples
    }
    pub fn pattern(&self) -> BayerPattern {
        self.pattern
    }
    pub fn black_level(&self) -> u16 {
        self.black_level
    }
    pub fn white_level(&self) -> u16 {
        self.white_level
    }
    pub fn frame_index(&self) -> usize {
        self.frame_index
    }

    #[inline]
    pub fn normalize_sample(&self, s: u16) -> f64 {
        let range = (self.white_level - self.black_level) as f64;
        ((s as f64 - self.black_level as f64) / range).clamp(0.0, 1.0)
    }

    /// Normalized mosaic as a one-channel image.
    pub fn normalized(&self) -> Image {
        let data = self.samples.iter().map(|&s| self.normalize_sample(s)).collect();
        Image::from_vec(self.width, self.height, 1, data).expect("validated frame")
    }

    pub fn sidecar(&self) -> Sidecar {
        Sidecar {
            width: self.width,
            height: self.height,
            pattern: self.pattern,
            black_level: self.black_level,
            white_level: self.white_level,
            frame_index: self.frame_index,
            iso: None,
            lens: None,
        }
    }
}

fn validate_geometry(width: usize, height: usize, black: u16, white: u16) -> Result<()> {
    if !width.is_multiple_of(2) || !height.is_multiple_of(2) || width == 0 || height == 0 {
        return Err(Error::OddDimension { width, height });
    }
    if black >= white {
        return Err(Error::InvalidLevels {
            black: black as u32,
            white: white as u32,
        });
    }
    Ok(())
}

/// Load a mosaic file and validate it against its sidecar.
pub fn ingest_frame(path: &Path, sidecar: &Sidecar) -> Result<BayerFrame> {
    validate_geometry(sidecar.width, sidecar.height, sidecar.black_level, sidecar.white_level)?;
    let (w, h, samples) = io::read_mosaic(path)?;
    if (w, h) != (sidecar.width, sidecar.height) {
        return Err(Error::mismatch(
            format!("{}x{} (sidecar)", sidecar.width, sidecar.height),
            format!("{w}x{h} (payload)"),
        ));
    }
    BayerFrame::new(
        w,
        h,
        samples,
        sidecar.pattern,
        sidecar.black_level,
        sidecar.white_level,
        sidecar.frame_index,
    )
}

/// Write a frame as `<stem>.<ext>` plus `<stem>.json`.
pub fn write_frame(path: &Path, frame: &BayerFrame, iso: Option<u32>, lens: Option<&str>) -> Result<()> {
    io::write_mosaic(path, frame.width, frame.height, &frame.samples)?;
    let mut sidecar = frame.sidecar();
    sidecar.iso = iso;
    sidecar.lens = lens.map(str::to_owned);
    sidecar.write(&path.with_extension("json"))
}

/// Frames of one burst directory, ordered by frame index.
#[derive(Debug, Clone)]
pub struct RawBurst {
    pub frames: Vec<BayerFrame>,
    pub paths: Vec<PathBuf>,
    pub lens: Option<String>,
    pub iso: Option<u32>,
}

/// Load every `<name>.{pgm,png}` + `<name>.json` pair in a directory.
///
/// JSON files without a matching mosaic (manifests, warp files) are skipped.
pub fn load_burst_dir(dir: &Path) -> Result<RawBurst> {
    if !dir.is_dir() {
        return Err(Error::MissingFile(dir.to_path_buf()));
    }
    let mut entries = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let mosaic = ["pgm", "png"]
            .iter()
            .map(|ext| path.with_extension(ext))
            .find(|p| p.exists());
        if let Some(mosaic) = mosaic {
            entries.push((path, mosaic));
        }
    }
    if entries.is_empty() {
        return Err(Error::format(dir, "no raw frames found"));
    }
    let mut loaded = entries
        .into_par_iter()
        .map(|(json, mosaic)| {
            let sidecar = Sidecar::read(&json)?;
            let frame = ingest_frame(&mosaic, &sidecar)?;
            Ok((sidecar, frame, mosaic))
        })
        .collect::<Result<Vec<_>>>()?;
    loaded.sort_by(|a, b| (a.1.frame_index, &a.2).cmp(&(b.1.frame_index, &b.2)));
    let first = &loaded[0];
    let (w, h) = (first.1.width, first.1.height);
    if let Some(bad) = loaded.iter().find(|l| (l.1.width, l.1.height) != (w, h)) {
        return Err(Error::mismatch(
            format!("{w}x{h}"),
            format!("{}x{} in {}", bad.1.width, bad.1.height, bad.2.display()),
        ));
    }
    let lens = first.0.lens.clone();
    let iso = first.0.iso;
    let (frames, paths) = loaded.into_iter().map(|(_, f, p)| (f, p)).unzip();
    Ok(RawBurst {
        frames,
        paths,
        lens,
        iso,
    })
}

/// Half-resolution four-plane view of a mosaic (planes R, G1, G2, B).
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarRaw {
    pub image: Image,
    /// Pattern of the mosaic these planes unpack to.
    pub pattern: BayerPattern,
}

impl PlanarRaw {
    pub fn new(image: Image, pattern: BayerPattern) -> Result<Self> {
        if image.channels() != 4 {
            return Err(Error::mismatch("4 planes", image.channels()));
        }
        Ok(PlanarRaw { image, pattern })
    }

    pub fn width(&self) -> usize {
        self.image.width()
    }

    pub fn height(&self) -> usize {
        self.image.height()
    }

    /// Reassemble the full-resolution normalized mosaic.
    pub fn unpack(&self) -> Image {
        let (pw, ph) = (self.width(), self.height());
        let mut out = Image::new(pw * 2, ph * 2, 1);
        for c in 0..4 {
            let (dx, dy) = self.pattern.plane_offset(c);
            let plane = self.image.plane(c);
            for y in 0..ph {
                for x in 0..pw {
                    out.set(0, 2 * x + dx, 2 * y + dy, plane[y * pw + x]);
                }
            }
        }
        out
    }
}

/// Pack a normalized one-channel mosaic into four half-resolution planes.
pub fn pack_normalized(mosaic: &Image, pattern: BayerPattern) -> Result<PlanarRaw> {
    let (w, h) = (mosaic.width(), mosaic.height());
    if w % 2 != 0 || h % 2 != 0 {
        return Err(Error::OddDimension { width: w, height: h });
    }
    let img = Image::from_fn(w / 2, h / 2, 4, |c, x, y| {
        let (dx, dy) = pattern.plane_offset(c);
        mosaic.get(0, 2 * x + dx, 2 * y + dy)
    });
    PlanarRaw::new(img, pattern)
}

pub fn pack_planes(frame: &BayerFrame) -> PlanarRaw {
    pack_normalized(&frame.normalized(), frame.pattern).expect("validated frame")
}

/// Sample an RGB image through a colour filter array and quantize it to
/// sensor counts. Inverse of demosaicing up to interpolation and rounding.
pub fn mosaic(
    rgb: &Image,
    pattern: BayerPattern,
    black_level: u16,
    white_level: u16,
    frame_index: usize,
) -> Result<BayerFrame> {
    if rgb.channels() != 3 {
        return Err(Error::mismatch("3 channels", rgb.channels()));
    }
    validate_geometry(rgb.width(), rgb.height(), black_level, white_level)?;
    let range = (white_level - black_level) as f64;
    let mut samples = Vec::with_capacity(rgb.plane_len());
    for y in 0..rgb.height() {
        for x in 0..rgb.width() {
            let c = match pattern.color_at(x, y) {
                CfaColor::Red => 0,
                CfaColor::Green => 1,
                CfaColor::Blue => 2,
            };
            let v = rgb.get(c, x, y).clamp(0.0, 1.0);
            samples.push((black_level as f64 + v * range).round() as u16);
        }
    }
    BayerFrame::new(
        rgb.width(),
        rgb.height(),
        samples,
        pattern,
        black_level,
        white_level,
        frame_index,
    )
}

// Malvar-He-Cutler kernels, scaled by 8.
const K_GREEN_AT_RB: [[f64; 5]; 5] = [
    [0.0, 0.0, -1.0, 0.0, 0.0],
    [0.0, 0.0, 2.0, 0.0, 0.0],
    [-1.0, 2.0, 4.0, 2.0, -1.0],
    [0.0, 0.0, 2.0, 0.0, 0.0],
    [0.0, 0.0, -1.0, 0.0, 0.0],
];
// chroma at a green site whose left/right neighbours carry that chroma
const K_CHROMA_AT_G_ROW: [[f64; 5]; 5] = [
    [0.0, 0.0, 0.5, 0.0, 0.0],
    [0.0, -1.0, 0.0, -1.0, 0.0],
    [-1.0, 4.0, 5.0, 4.0, -1.0],
    [0.0, -1.0, 0.0, -1.0, 0.0],
    [0.0, 0.0, 0.5, 0.0, 0.0],
];
// chroma at a green site whose up/down neighbours carry that chroma
const K_CHROMA_AT_G_COL: [[f64; 5]; 5] = [
    [0.0, 0.0, -1.0, 0.0, 0.0],
    [0.0, -1.0, 4.0, -1.0, 0.0],
    [0.5, 0.0, 5.0, 0.0, 0.5],
    [0.0, -1.0, 4.0, -1.0, 0.0],
    [0.0, 0.0, -1.0, 0.0, 0.0],
];
// red at blue sites and blue at red sites
const K_CHROMA_AT_OPPOSITE: [[f64; 5]; 5] = [
    [0.0, 0.0, -1.5, 0.0, 0.0],
    [0.0, 2.0, 0.0, 2.0, 0.0],
    [-1.5, 0.0, 6.0, 0.0, -1.5],
    [0.0, 2.0, 0.0, 2.0, 0.0],
    [0.0, 0.0, -1.5, 0.0, 0.0],
];

/// Index into a mosaic of even length `n`, replicating whole Bayer cells
/// past the edge so colour parity is preserved.
#[inline]
fn cell_clamp(i: isize, n: usize) -> usize {
    if i < 0 {
        i.rem_euclid(2) as usize
    } else if i as usize >= n {
        n - 2 + (i as usize - n) % 2
    } else {
        i as usize
    }
}

/// Malvar-He-Cutler demosaic of a normalized mosaic.
pub fn demosaic_normalized(mosaic: &Image, pattern: BayerPattern) -> Result<Image> {
    let (w, h) = (mosaic.width(), mosaic.height());
    if w % 2 != 0 || h % 2 != 0 || w < 2 || h < 2 {
        return Err(Error::OddDimension { width: w, height: h });
    }
    const APRON: usize = 2;
    let pw = w + 2 * APRON;
    let ph = h + 2 * APRON;
    let src = mosaic.plane(0);
    let mut padded = vec![0.0; pw * ph];
    for py in 0..ph {
        let sy = cell_clamp(py as isize - APRON as isize, h);
        for px in 0..pw {
            let sx = cell_clamp(px as isize - APRON as isize, w);
            padded[py * pw + px] = src[sy * w + sx];
        }
    }
    let apply = |k: &[[f64; 5]; 5], x: usize, y: usize| -> f64 {
        let mut acc = 0.0;
        for (ky, row) in k.iter().enumerate() {
            let base = (y + ky) * pw + x;
            for (kx, &kv) in row.iter().enumerate() {
                if kv != 0.0 {
                    acc += kv * padded[base + kx];
                }
            }
        }
        acc / 8.0
    };

    let n = w * h;
    let mut out = vec![0.0; 3 * n];
    let (r_plane, rest) = out.split_at_mut(n);
    let (g_plane, b_plane) = rest.split_at_mut(n);
    r_plane
        .par_chunks_mut(w)
        .zip(g_plane.par_chunks_mut(w))
        .zip(b_plane.par_chunks_mut(w))
        .enumerate()
        .for_each(|(y, ((rr, gr), br))| {
            for x in 0..w {
                let center = padded[(y + APRON) * pw + x + APRON];
                let (r, g, b) = match pattern.color_at(x, y) {
                    CfaColor::Red => (center, apply(&K_GREEN_AT_RB, x, y), apply(&K_CHROMA_AT_OPPOSITE, x, y)),
                    CfaColor::Blue => (apply(&K_CHROMA_AT_OPPOSITE, x, y), apply(&K_GREEN_AT_RB, x, y), center),
                    CfaColor::Green => {
                        let row = apply(&K_CHROMA_AT_G_ROW, x, y);
                        let col = apply(&K_CHROMA_AT_G_COL, x, y);
                        if pattern.color_at(x + 1, y) == CfaColor::Red {
                            (row, center, col)
                        } else {
                            (col, center, row)
                        }
                    }
                };
                rr[x] = r.clamp(0.0, 1.0);
                gr[x] = g.clamp(0.0, 1.0);
                br[x] = b.clamp(0.0, 1.0);
            }
        });
    Image::from_vec(w, h, 3, out)
}

/// Full-resolution linear RGB in `[0, 1]`.
pub fn demosaic(frame: &BayerFrame) -> Image {
    demosaic_normalized(&frame.normalized(), frame.pattern).expect("validated frame")
}

pub fn demosaic_planar(raw: &PlanarRaw) -> Image {
    demosaic_normalized(&raw.unpack(), raw.pattern).expect("planar raw has even size")
}
