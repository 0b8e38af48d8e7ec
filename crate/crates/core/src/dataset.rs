//! Crop datasets built from registered bursts: grid placement, crop
//! extraction with checksummed manifests, burst-level train/test splits and
//! dihedral augmentation.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::io::{read_image, write_png16};
use crate::raw::{BayerPattern, CfaColor, PlanarRaw};

pub const DEFAULT_CROP_SIZE: usize = 128;

/// Square crop in full-resolution pixel coordinates, aligned to Bayer cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CropRect {
    pub x: usize,
    pub y: usize,
    pub size: usize,
}

impl CropRect {
    pub fn new(x: usize, y: usize, size: usize) -> Result<Self> {
        if !x.is_multiple_of(2) || !y.is_multiple_of(2) || !size.is_multiple_of(2) || size == 0 {
            return Err(Error::InvalidParameter(format!(
                "crop ({x}, {y}, {size}) must have even corner and nonzero even size"
            )));
        }
        Ok(CropRect { x, y, size })
    }

    pub fn fits(&self, width: usize, height: usize) -> bool {
        self.x + self.size <= width && self.y + self.size <= height
    }

    /// The same region in half-resolution plane coordinates.
    pub fn plane_rect(&self) -> CropRect {
        CropRect {
            x: self.x / 2,
            y: self.y / 2,
            size: self.size / 2,
        }
    }
}

/// Non-overlapping row-major grid anchored at the origin. Remainders on the
/// right and bottom are dropped; a crop larger than the image yields no rects.
pub fn grid_crops(width: usize, height: usize, size: usize) -> Result<Vec<CropRect>> {
    if size == 0 || !size.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "crop size must be even and nonzero, got {size}"
        )));
    }
    if size > width || size > height {
        warn!("crop size {size} exceeds image {width}x{height}; no crops produced");
        return Ok(Vec::new());
    }
    let mut rects = Vec::with_capacity((width / size) * (height / size));
    for gy in 0..height / size {
        for gx in 0..width / size {
            rects.push(CropRect {
                x: gx * size,
                y: gy * size,
                size,
            });
        }
    }
    Ok(rects)
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

/// Element of the dihedral group of the square: an optional horizontal flip
/// followed by a counter-clockwise rotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct AugmentOp {
    /// Counter-clockwise rotation in degrees: 0, 90, 180 or 270.
    pub rotation: u16,
    pub hflip: bool,
}

impl AugmentOp {
    pub const IDENTITY: AugmentOp = AugmentOp {
        rotation: 0,
        hflip: false,
    };

    pub fn new(rotation: u16, hflip: bool) -> Result<Self> {
        if !rotation.is_multiple_of(90) || rotation >= 360 {
            return Err(Error::InvalidParameter(format!(
                "rotation must be 0, 90, 180 or 270, got {rotation}"
            )));
        }
        Ok(AugmentOp { rotation, hflip })
    }

    pub fn all() -> [AugmentOp; 8] {
        let mut ops = [AugmentOp::IDENTITY; 8];
        for (i, op) in ops.iter_mut().enumerate() {
            *op = AugmentOp {
                rotation: 90 * (i % 4) as u16,
                hflip: i >= 4,
            };
        }
        ops
    }

    fn quarter_turns(self) -> u16 {
        (self.rotation / 90) % 4
    }

    fn from_parts(turns: u16, hflip: bool) -> AugmentOp {
        AugmentOp {
            rotation: 90 * (turns % 4),
            hflip,
        }
    }

    /// Apply `self`, then `next`.
    pub fn then(self, next: AugmentOp) -> AugmentOp {
        // R^a F^f followed by R^b F^g is R^(b ± a) F^(f^g): a flip conjugates
        // a rotation into its inverse.
        let a = self.quarter_turns();
        let b = next.quarter_turns();
        let turns = if next.hflip { b + 4 - a } else { b + a };
        AugmentOp::from_parts(turns, self.hflip ^ next.hflip)
    }

    pub fn inverse(self) -> AugmentOp {
        if self.hflip {
            self
        } else {
            AugmentOp::from_parts(4 - self.quarter_turns(), false)
        }
    }

    /// Destination of source pixel `(x, y)` in a `w`×`h` grid.
    pub fn map_point(self, x: usize, y: usize, w: usize, h: usize) -> (usize, usize) {
        let (mut x, mut y, mut w, mut h) = (x, y, w, h);
        if self.hflip {
            x = w - 1 - x;
        }
        for _ in 0..self.quarter_turns() {
            (x, y) = (y, w - 1 - x);
            (w, h) = (h, w);
        }
        (x, y)
    }

    fn check(self, width: usize, height: usize) -> Result<()> {
        if self.quarter_turns() % 2 == 1 && width != height {
            return Err(Error::InvalidParameter(format!(
                "{}° rotation needs a square crop, got {width}x{height}",
                self.rotation
            )));
        }
        Ok(())
    }

    /// Pattern of the mosaic obtained by transforming an even-sized mosaic
    /// with pattern `pattern`.
    pub fn transform_pattern(self, pattern: BayerPattern) -> BayerPattern {
        let mut cell = [[CfaColor::Green; 2]; 2];
        for dy in 0..2 {
            for dx in 0..2 {
                let (tx, ty) = self.map_point(dx, dy, 2, 2);
                cell[ty][tx] = pattern.color_at(dx, dy);
            }
        }
        BayerPattern::from_cell(cell).expect("dihedral maps of a Bayer cell are Bayer cells")
    }
}

impl fmt::Display for AugmentOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}{}", self.rotation, if self.hflip { "h" } else { "" })
    }
}

impl FromStr for AugmentOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("augment op '{s}' is not of the form r<deg>[h]"));
        let body = s.strip_prefix('r').ok_or_else(bad)?;
        let (deg, hflip) = match body.strip_suffix('h') {
            Some(d) => (d, true),
            None => (body, false),
        };
        AugmentOp::new(deg.parse().map_err(|_| bad())?, hflip)
    }
}

/// Dihedral transform of every channel.
pub fn augment(image: &Image, op: AugmentOp) -> Result<Image> {
    let (w, h) = (image.width(), image.height());
    op.check(w, h)?;
    let (ow, oh) = if op.quarter_turns() % 2 == 1 { (h, w) } else { (w, h) };
    let mut out = Image::new(ow, oh, image.channels());
    for c in 0..image.channels() {
        let src = image.plane(c);
        let dst = out.plane_mut(c);
        for y in 0..h {
            for x in 0..w {
                let (tx, ty) = op.map_point(x, y, w, h);
                dst[ty * ow + tx] = src[y * w + x];
            }
        }
    }
    Ok(out)
}

/// Transform packed raw planes so the result is the packing of the
/// transformed mosaic. Colors stay attached to their samples, so the Bayer
/// pattern of the result follows the op.
pub fn augment_planar(raw: &PlanarRaw, op: AugmentOp) -> Result<PlanarRaw> {
    let moved = augment(&raw.image, op)?;
    let pattern = op.transform_pattern(raw.pattern);
    let planes = (0..4)
        .map(|c| {
            let (dx, dy) = pattern.plane_offset(c);
            let inv = op.inverse().map_point(dx, dy, 2, 2);
            let source = (0..4)
                .find(|&j| raw.pattern.plane_offset(j) == inv)
                .expect("every cell offset belongs to one plane");
            moved.plane(source).to_vec()
        })
        .collect();
    PlanarRaw::new(Image::from_planes(moved.width(), moved.height(), planes)?, pattern)
}

// ---------------------------------------------------------------------------
// Crop extraction and manifests
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CropRecord {
    pub x: usize,
    pub y: usize,
    pub size: usize,
    /// Frame crop paths relative to the manifest directory.
    pub frames: Vec<String>,
    pub gt: String,
    /// Hex SHA-256 of every frame file followed by the ground-truth file.
    pub sha256: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub augment: Option<AugmentOp>,
    /// Set for raw crops stored as four stacked planes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<BayerPattern>,
}

impl CropRecord {
    pub fn rect(&self) -> CropRect {
        CropRect {
            x: self.x,
            y: self.y,
            size: self.size,
        }
    }

    fn files(&self) -> impl Iterator<Item = &String> {
        self.frames.iter().chain(std::iter::once(&self.gt))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurstCrops {
    pub id: String,
    pub lens: Option<String>,
    pub split: Option<Split>,
    pub crops: Vec<CropRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CropManifest {
    pub seed: Option<u64>,
    pub crop_size: usize,
    pub bursts: Vec<BurstCrops>,
}

impl CropManifest {
    pub fn new(crop_size: usize) -> Self {
        CropManifest {
            seed: None,
            crop_size,
            bursts: Vec::new(),
        }
    }

    /// Append the bursts of `other`, keeping bursts ordered by id.
    pub fn merge(&mut self, other: CropManifest) -> Result<()> {
        if other.crop_size != self.crop_size && !other.bursts.is_empty() {
            return Err(Error::mismatch(
                format!("crop size {}", self.crop_size),
                other.crop_size,
            ));
        }
        for burst in other.bursts {
            if self.bursts.iter().any(|b| b.id == burst.id) {
                return Err(Error::IdMismatch(format!("burst '{}' appears twice", burst.id)));
            }
            self.bursts.push(burst);
        }
        self.bursts.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(())
    }

    /// Record a split assignment; bursts absent from it become unassigned.
    pub fn apply_split(&mut self, assignment: &BTreeMap<String, Split>, seed: u64) {
        self.seed = Some(seed);
        for burst in &mut self.bursts {
            burst.split = assignment.get(&burst.id).copied();
        }
    }

    pub fn crop_count(&self) -> usize {
        self.bursts.iter().map(|b| b.crops.len()).sum()
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<CropManifest> {
        let text = fs::read_to_string(path).map_err(|_| Error::MissingFile(path.to_path_buf()))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Recompute every checksum under `root`.
    pub fn verify(&self, root: &Path) -> Result<()> {
        let records: Vec<&CropRecord> = self.bursts.iter().flat_map(|b| &b.crops).collect();
        records.par_iter().try_for_each(|record| {
            if record.sha256.len() != record.frames.len() + 1 {
                return Err(Error::format(
                    root.join(&record.gt),
                    "checksum count does not match file count",
                ));
            }
            for (file, expected) in record.files().zip(&record.sha256) {
                let path = root.join(file);
                if &sha256_file(&path)? != expected {
                    return Err(Error::Checksum(path));
                }
            }
            Ok(())
        })
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|_| Error::MissingFile(path.to_path_buf()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Frames of a registered burst in either representation.
#[derive(Debug, Clone, Copy)]
pub enum BurstFrames<'a> {
    Rgb(&'a [Image]),
    Raw(&'a [PlanarRaw]),
}

impl BurstFrames<'_> {
    fn len(&self) -> usize {
        match self {
            BurstFrames::Rgb(f) => f.len(),
            BurstFrames::Raw(f) => f.len(),
        }
    }

    /// Full-resolution dimensions shared by every frame.
    fn dimensions(&self) -> Result<(usize, usize)> {
        let dims: Vec<(usize, usize)> = match self {
            BurstFrames::Rgb(f) => f.iter().map(|i| (i.width(), i.height())).collect(),
            BurstFrames::Raw(f) => f.iter().map(|r| (2 * r.width(), 2 * r.height())).collect(),
        };
        let first = *dims.first().ok_or(Error::NoItems)?;
        if let Some(d) = dims.iter().find(|d| **d != first) {
            return Err(Error::mismatch(
                format!("{}x{}", first.0, first.1),
                format!("{}x{}", d.0, d.1),
            ));
        }
        Ok(first)
    }
}

/// Everything needed to cut one burst into crops.
#[derive(Debug, Clone, Copy)]
pub struct CropJob<'a> {
    pub id: &'a str,
    pub lens: Option<&'a str>,
    pub frames: BurstFrames<'a>,
    pub ground_truth: &'a Image,
    pub rects: &'a [CropRect],
    /// Ops to materialize per rect; empty means the untransformed crop only.
    pub augment: &'a [AugmentOp],
}

/// Stack the four planes of a raw crop vertically into one channel.
pub fn stack_planes(planes: &Image) -> Image {
    Image::from_vec(
        planes.width(),
        planes.height() * planes.channels(),
        1,
        planes.data().to_vec(),
    )
    .expect("stacking preserves the sample count")
}

pub fn unstack_planes(stacked: &Image) -> Result<Image> {
    if stacked.channels() != 1 || !stacked.height().is_multiple_of(4) {
        return Err(Error::mismatch(
            "single-channel image with height divisible by 4",
            stacked.shape_string(),
        ));
    }
    Image::from_vec(stacked.width(), stacked.height() / 4, 4, stacked.data().to_vec())
}

/// Write one file per frame and one ground-truth crop for every rect, and
/// describe them in a single-burst manifest. Crops are quantized to 16 bits.
pub fn build_crop_dataset(job: &CropJob, out_dir: &Path) -> Result<CropManifest> {
    let (width, height) = job.frames.dimensions()?;
    let gt = job.ground_truth;
    if (gt.width(), gt.height()) != (width, height) {
        return Err(Error::mismatch(
            format!("ground truth {width}x{height}"),
            format!("{}x{}", gt.width(), gt.height()),
        ));
    }
    let crop_size = job.rects.first().map_or(0, |r| r.size);
    for rect in job.rects {
        CropRect::new(rect.x, rect.y, rect.size)?;
        if !rect.fits(width, height) || rect.size != crop_size {
            return Err(Error::InvalidParameter(format!(
                "crop {rect:?} invalid for {width}x{height} image with crop size {crop_size}"
            )));
        }
    }
    let burst_dir = out_dir.join(job.id);
    fs::create_dir_all(&burst_dir)?;
    let ops: Vec<Option<AugmentOp>> = if job.augment.is_empty() {
        vec![None]
    } else {
        job.augment.iter().copied().map(Some).collect()
    };

    let per_rect: Vec<Vec<CropRecord>> = job
        .rects
        .par_iter()
        .enumerate()
        .map(|(index, rect)| {
            ops.iter()
                .map(|op| write_crop(job, out_dir, index, *rect, *op))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut manifest = CropManifest::new(crop_size);
    manifest.bursts.push(BurstCrops {
        id: job.id.to_string(),
        lens: job.lens.map(str::to_string),
        split: None,
        crops: per_rect.into_iter().flatten().collect(),
    });
    Ok(manifest)
}

fn write_crop(
    job: &CropJob,
    out_dir: &Path,
    index: usize,
    rect: CropRect,
    op: Option<AugmentOp>,
) -> Result<CropRecord> {
    let stem = match op {
        Some(op) => format!("c{index:05}_{op}"),
        None => format!("c{index:05}"),
    };
    let op_or_id = op.unwrap_or(AugmentOp::IDENTITY);
    let mut files = Vec::with_capacity(job.frames.len() + 1);
    let mut pattern = None;
    let save = |name: String, img: &Image| -> Result<String> {
        let rel = format!("{}/{name}", job.id);
        write_png16(&out_dir.join(&rel), img)?;
        Ok(rel)
    };
    match job.frames {
        BurstFrames::Rgb(frames) => {
            for (i, frame) in frames.iter().enumerate() {
                let crop = augment(&frame.crop(rect.x, rect.y, rect.size, rect.size)?, op_or_id)?;
                files.push(save(format!("{stem}_f{i:02}.png"), &crop)?);
            }
        }
        BurstFrames::Raw(frames) => {
            let p = rect.plane_rect();
            for (i, frame) in frames.iter().enumerate() {
                let planes = PlanarRaw::new(frame.image.crop(p.x, p.y, p.size, p.size)?, frame.pattern)?;
                let moved = augment_planar(&planes, op_or_id)?;
                pattern = Some(moved.pattern);
                files.push(save(format!("{stem}_f{i:02}.png"), &stack_planes(&moved.image))?);
            }
        }
    }
    let gt_crop = augment(&job.ground_truth.crop(rect.x, rect.y, rect.size, rect.size)?, op_or_id)?;
    let gt = save(format!("{stem}_gt.png"), &gt_crop)?;
    let sha256 = files
        .iter()
        .chain(std::iter::once(&gt))
        .map(|f| sha256_file(&out_dir.join(f)))
        .collect::<Result<_>>()?;
    Ok(CropRecord {
        x: rect.x,
        y: rect.y,
        size: rect.size,
        frames: files,
        gt,
        sha256,
        augment: op,
        pattern,
    })
}

/// Decoded contents of one crop record.
#[derive(Debug, Clone)]
pub enum CropFrames {
    Rgb(Vec<Image>),
    Raw(Vec<PlanarRaw>),
}

pub fn load_crop(root: &Path, record: &CropRecord) -> Result<(CropFrames, Image)> {
    let read = |rel: &String| -> Result<Image> { read_image(&root.join(rel)) };
    let frames = match record.pattern {
        Some(pattern) => CropFrames::Raw(
            record
                .frames
                .iter()
                .map(|f| PlanarRaw::new(unstack_planes(&read(f)?)?, pattern))
                .collect::<Result<_>>()?,
        ),
        None => CropFrames::Rgb(record.frames.iter().map(read).collect::<Result<_>>()?),
    };
    Ok((frames, read(&record.gt)?))
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub test: usize,
}

/// Assign bursts to train/test per lens with a seeded shuffle. Within a lens
/// the ids are sorted before shuffling so input order does not matter;
/// bursts beyond the requested counts stay unassigned.
pub fn split_manifest(
    bursts: &[(String, String)],
    counts: &BTreeMap<String, SplitCounts>,
    seed: u64,
) -> Result<BTreeMap<String, Split>> {
    let mut by_lens: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (id, lens) in bursts {
        by_lens.entry(lens.as_str()).or_default().push(id.as_str());
    }
    let mut assignment = BTreeMap::new();
    for (stream, (lens, want)) in counts.iter().enumerate() {
        let mut ids = by_lens.get(lens.as_str()).cloned().unwrap_or_default();
        let requested = want.train + want.test;
        if requested > ids.len() {
            return Err(Error::InsufficientBursts {
                lens: lens.clone(),
                requested,
                available: ids.len(),
            });
        }
        ids.sort_unstable();
        let before = ids.len();
        ids.dedup();
        if ids.len() != before {
            return Err(Error::IdMismatch(format!("duplicate burst id for lens '{lens}'")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream as u64);
        ids.shuffle(&mut rng);
        for (i, id) in ids.into_iter().take(requested).enumerate() {
            let split = if i < want.train { Split::Train } else { Split::Test };
            assignment.insert(id.to_string(), split);
        }
    }
    Ok(assignment)
}

/// Directory layout helper: path of a manifest file inside a crop root.
pub fn manifest_path(root: &Path) -> PathBuf {
    root.join("manifest.json")
}
