//! Locating and loading bursts on disk.

use std::fs;
use std::path::{Path, PathBuf};

use fstack_core::io::read_image;
use fstack_core::raw::{demosaic, load_burst_dir, pack_planes, RawBurst};
use fstack_core::{Image, PlanarRaw};
use rayon::prelude::*;

use crate::error::{AtStage, CliResult, Failure};

/// A burst in memory: demosaiced RGB frames, plus the packed raw planes
/// when the burst came from raw mosaics.
#[derive(Debug, Clone)]
pub struct InputBurst {
    pub id: String,
    pub dir: PathBuf,
    pub lens: Option<String>,
    pub iso: Option<u32>,
    pub sources: Vec<PathBuf>,
    pub rgb: Vec<Image>,
    pub raw: Option<RawInput>,
}

#[derive(Debug, Clone)]
pub struct RawInput {
    pub burst: RawBurst,
    pub planar: Vec<PlanarRaw>,
}

pub fn burst_id(dir: &Path) -> String {
    let canonical = dir.canonicalize().unwrap_or_else(|_| dir.to_path_buf());
    canonical
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "burst".to_string())
}

fn extension(path: &Path) -> Option<String> {
    path.extension().map(|e| e.to_string_lossy().to_ascii_lowercase())
}

/// Whether `dir` holds at least one raw mosaic with a JSON sidecar.
pub fn is_raw_burst_dir(dir: &Path) -> bool {
    let Ok(entries) = fs::read_dir(dir) else {
        return false;
    };
    entries.flatten().any(|e| {
        let p = e.path();
        extension(&p).as_deref() == Some("json")
            && (p.with_extension("pgm").exists() || p.with_extension("png").exists())
    })
}

/// RGB frames in a directory: `.png`/`.pfm` files sorted by name, skipping
/// ground-truth files named `gt.*`.
fn rgb_frame_paths(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .at("ingest", dir.display())?
        .flatten()
        .map(|e| e.path())
        .filter(|p| matches!(extension(p).as_deref(), Some("png" | "pfm")))
        .filter(|p| p.file_stem().is_some_and(|s| s != "gt"))
        .collect();
    paths.sort();
    Ok(paths)
}

pub fn load_raw(dir: &Path) -> CliResult<InputBurst> {
    let id = burst_id(dir);
    let burst = load_burst_dir(dir).at("ingest", dir.display())?;
    let (rgb, planar): (Vec<Image>, Vec<PlanarRaw>) =
        burst.frames.par_iter().map(|f| (demosaic(f), pack_planes(f))).unzip();
    Ok(InputBurst {
        id,
        dir: dir.to_path_buf(),
        lens: burst.lens.clone(),
        iso: burst.iso,
        sources: burst.paths.clone(),
        rgb,
        raw: Some(RawInput { burst, planar }),
    })
}

/// Load a raw burst directory, or failing that a directory of RGB frames.
pub fn load_any(dir: &Path) -> CliResult<InputBurst> {
    if !dir.is_dir() {
        return Err(Failure::data("ingest", dir.display(), "burst directory not found"));
    }
    if is_raw_burst_dir(dir) {
        return load_raw(dir);
    }
    let paths = rgb_frame_paths(dir)?;
    if paths.is_empty() {
        return Err(Failure::data("ingest", dir.display(), "no raw or RGB frames found"));
    }
    let rgb = paths
        .par_iter()
        .map(|p| read_image(p).at("ingest", p.display()))
        .collect::<CliResult<Vec<_>>>()?;
    Ok(InputBurst {
        id: burst_id(dir),
        dir: dir.to_path_buf(),
        lens: None,
        iso: None,
        sources: paths,
        rgb,
        raw: None,
    })
}

/// Burst directories under `root`: `root` itself when it is a raw burst,
/// otherwise its raw-burst subdirectories in name order.
pub fn discover(root: &Path) -> CliResult<Vec<PathBuf>> {
    if !root.is_dir() {
        return Err(Failure::data("ingest", root.display(), "input directory not found"));
    }
    if is_raw_burst_dir(root) {
        return Ok(vec![root.to_path_buf()]);
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .at("ingest", root.display())?
        .flatten()
        .map(|e| e.path())
        .filter(|p| p.is_dir() && is_raw_burst_dir(p))
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Failure::data("ingest", root.display(), "no raw bursts found"));
    }
    Ok(dirs)
}

/// `gt.png` or `gt.pfm` inside a burst directory.
pub fn ground_truth_path(dir: &Path) -> Option<PathBuf> {
    ["gt.png", "gt.pfm"].iter().map(|n| dir.join(n)).find(|p| p.exists())
}

pub fn read_rgb(path: &Path, stage: &str) -> CliResult<Image> {
    let img = read_image(path).at(stage, path.display())?;
    if img.channels() != 3 {
        return Err(Failure::data(
            stage,
            path.display(),
            format!("expected RGB, got {}", img.shape_string()),
        ));
    }
    Ok(img)
}
