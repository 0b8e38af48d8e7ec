//! Single-stage subcommands.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use fstack_core::dataset::{
    build_crop_dataset, grid_crops, manifest_path, sha256_file, split_manifest, stack_planes, BurstFrames, CropJob,
    CropManifest, SplitCounts,
};
use fstack_core::fuse::{fuse, Burst, Fused};
use fstack_core::io::{read_image, write_image};
use fstack_core::metrics::{evaluate_items, EvalItem};
use fstack_core::noise::{add_noise_burst, add_noise_planar_burst};
use fstack_core::raw::{write_frame, BayerFrame};
use fstack_core::register::{align_frames, register_burst, warp_planar, WarpFile};
use fstack_core::{AffineWarp, EccConfig, Image, NoiseParams, PlanarRaw, RegistrationResult};
use rayon::prelude::*;
use serde::Serialize;

use crate::args::{CropsArgs, EvalArgs, FixtureArgs, IngestArgs, NoiseArgs, RegisterArgs, SplitArgs, StackArgs};
use crate::burst::{self, InputBurst};
use crate::config::{parse_ops, NoiseMode, PipelineConfig};
use crate::error::{AtStage, CliResult, ExitKind, Failure};
use crate::seeds;

// --- shared helpers -------------------------------------------------------

pub fn write_json<T: Serialize>(path: &Path, value: &T, stage: &str) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::data(stage, path.display(), e))?;
    fs::write(path, text + "\n").at(stage, path.display())
}

pub fn create_dir(path: &Path, stage: &str) -> CliResult<()> {
    fs::create_dir_all(path).at(stage, path.display())
}

pub fn save_image(path: &Path, img: &Image, stage: &str) -> CliResult<String> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent, stage)?;
    }
    write_image(path, img).at(stage, path.display())?;
    sha256_file(path).at(stage, path.display())
}

pub fn file_name(path: &Path) -> String {
    path.file_name()
        .map_or_else(String::new, |n| n.to_string_lossy().into_owned())
}

/// Register a burst on luma; diverged pairs either abort (exit 4) or fall
/// back to the identity with a warning.
pub fn register(frames: &[Image], cfg: &EccConfig, strict: bool, item: &str) -> CliResult<RegistrationResult> {
    let luma: Vec<Image> = frames.par_iter().map(Image::luma).collect();
    let result = register_burst(&luma, cfg).at("register", item)?;
    let diverged = result.diverged();
    if !diverged.is_empty() {
        let msg = format!("ECC diverged for frames {diverged:?}");
        if strict {
            return Err(Failure::new(ExitKind::Divergence, "register", item, msg));
        }
        log::warn!("{item}: {msg}; identity warps used");
    }
    Ok(result)
}

pub fn read_warps(path: &Path, frames: usize, stage: &str) -> CliResult<Vec<AffineWarp>> {
    let warps = WarpFile::read(path).at(stage, path.display())?.cumulative();
    if warps.len() != frames {
        return Err(Failure::data(
            stage,
            path.display(),
            format!("{} warps for {frames} frames", warps.len()),
        ));
    }
    Ok(warps)
}

pub fn align_planar(planar: &[PlanarRaw], warps: &[AffineWarp], item: &str) -> CliResult<Vec<PlanarRaw>> {
    planar
        .par_iter()
        .zip(warps)
        .map(|(p, w)| warp_planar(p, w))
        .collect::<fstack_core::Result<_>>()
        .at("register", item)
}

// --- ingest ---------------------------------------------------------------

#[derive(Serialize)]
pub struct IngestRecord {
    pub burst: String,
    pub lens: Option<String>,
    pub iso: Option<u32>,
    pub frames: Vec<IngestFrame>,
}

#[derive(Serialize)]
pub struct IngestFrame {
    pub index: usize,
    pub source: String,
    pub pattern: String,
    pub width: usize,
    pub height: usize,
    pub black_level: u16,
    pub white_level: u16,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sha256: Option<String>,
}

pub fn ingest_record(burst: &InputBurst, outputs: &[(String, String)]) -> IngestRecord {
    let raw = burst.raw.as_ref().expect("ingest records describe raw bursts");
    IngestRecord {
        burst: burst.id.clone(),
        lens: burst.lens.clone(),
        iso: burst.iso,
        frames: raw
            .burst
            .frames
            .iter()
            .zip(&burst.sources)
            .enumerate()
            .map(|(i, (f, src))| IngestFrame {
                index: f.frame_index(),
                source: file_name(src),
                pattern: format!("{:?}", f.pattern()).to_uppercase(),
                width: f.width(),
                height: f.height(),
                black_level: f.black_level(),
                white_level: f.white_level(),
                output: outputs.get(i).map(|o| o.0.clone()),
                sha256: outputs.get(i).map(|o| o.1.clone()),
            })
            .collect(),
    }
}

pub fn ingest(args: &IngestArgs) -> CliResult<()> {
    let burst = burst::load_raw(&args.burst_dir)?;
    let raw = burst.raw.as_ref().expect("load_raw returns raw data");
    create_dir(&args.out, "ingest")?;
    let outputs = (0..burst.rgb.len())
        .into_par_iter()
        .map(|i| {
            let name = format!("frame_{i:02}.png");
            let img = if args.planar {
                stack_planes(&raw.planar[i].image)
            } else {
                burst.rgb[i].clone()
            };
            Ok((name.clone(), save_image(&args.out.join(&name), &img, "ingest")?))
        })
        .collect::<CliResult<Vec<_>>>()?;
    write_json(
        &args.out.join("ingest.json"),
        &ingest_record(&burst, &outputs),
        "ingest",
    )?;
    println!(
        "ingested {} frames of {} into {}",
        outputs.len(),
        burst.id,
        args.out.display()
    );
    Ok(())
}

// --- register -------------------------------------------------------------

pub fn register_cmd(args: &RegisterArgs, cfg: &PipelineConfig) -> CliResult<()> {
    let mut ecc = cfg.ecc;
    args.ecc.apply(&mut ecc);
    ecc.validate().map_err(|e| Failure::config("register", "ecc", e))?;
    let burst = burst::load_any(&args.burst_dir)?;
    let result = register(
        &burst.rgb,
        &ecc,
        args.fail_on_divergence || cfg.fail_on_divergence,
        &burst.id,
    )?;
    create_dir(&args.out, "register")?;
    write_json(&args.out.join("warps.json"), &result.to_file(), "register")?;
    if args.aligned {
        let aligned = align_frames(&burst.rgb, &result.warps()).at("register", &burst.id)?;
        aligned.par_iter().enumerate().try_for_each(|(i, img)| {
            save_image(&args.out.join(format!("aligned_{i:02}.png")), img, "register").map(drop)
        })?;
    }
    println!(
        "registered {} frames of {} ({} diverged)",
        burst.rgb.len(),
        burst.id,
        result.diverged().len()
    );
    Ok(())
}

// --- stack ----------------------------------------------------------------

#[derive(Serialize)]
pub struct StackRecord {
    pub burst: String,
    pub frames: Vec<String>,
    pub fusion: fstack_core::FusionConfig,
    pub warps: Option<String>,
    pub diverged: Vec<usize>,
    pub output: String,
    pub sha256: String,
}

/// Fuse already-aligned frames.
pub fn fuse_frames(frames: Vec<Image>, fusion: &fstack_core::FusionConfig, item: &str) -> CliResult<Fused> {
    let burst = Burst::new(frames).at("fuse", item)?;
    fuse(&burst, fusion).at("fuse", item)
}

pub fn decision_image(fused: &Fused, frames: usize) -> Option<Image> {
    let map = fused.decision.as_ref()?;
    let indices = map.indices()?;
    let scale = if frames > 1 { 1.0 / (frames - 1) as f64 } else { 0.0 };
    let data = indices.iter().map(|&i| i as f64 * scale).collect();
    Image::from_vec(map.width(), map.height(), 1, data).ok()
}

pub fn stack(args: &StackArgs, cfg: &PipelineConfig) -> CliResult<()> {
    let mut ecc = cfg.ecc;
    args.ecc.apply(&mut ecc);
    let mut fusion = cfg.fusion;
    args.fusion.apply(&mut fusion);
    ecc.validate().map_err(|e| Failure::config("stack", "ecc", e))?;
    fusion.validate().map_err(|e| Failure::config("stack", "fusion", e))?;

    let burst = burst::load_any(&args.burst_dir)?;
    let out_dir = args.out.parent().map(Path::to_path_buf).unwrap_or_default();
    let (warps, warps_file, diverged) = if args.no_register {
        (vec![AffineWarp::identity(); burst.rgb.len()], None, Vec::new())
    } else if let Some(path) = &args.warps {
        (
            read_warps(path, burst.rgb.len(), "register")?,
            Some(path.clone()),
            Vec::new(),
        )
    } else {
        let strict = args.fail_on_divergence || cfg.fail_on_divergence;
        let result = register(&burst.rgb, &ecc, strict, &burst.id)?;
        let path = args.warps_out.clone().unwrap_or_else(|| out_dir.join("warps.json"));
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            create_dir(parent, "register")?;
        }
        write_json(&path, &result.to_file(), "register")?;
        (result.warps(), Some(path), result.diverged())
    };
    let aligned = align_frames(&burst.rgb, &warps).at("register", &burst.id)?;
    let n = aligned.len();
    let fused = fuse_frames(aligned, &fusion, &burst.id)?;
    let sha256 = save_image(&args.out, &fused.image, "fuse")?;
    if let Some(path) = &args.decision_map {
        match decision_image(&fused, n) {
            Some(img) => {
                save_image(path, &img, "fuse")?;
            }
            None => log::warn!(
                "{:?} fusion has no decision map; {} not written",
                fusion.method,
                path.display()
            ),
        }
    }
    let record = StackRecord {
        burst: burst.id.clone(),
        frames: burst.sources.iter().map(|p| file_name(p)).collect(),
        fusion,
        warps: warps_file.as_deref().map(file_name),
        diverged,
        output: file_name(&args.out),
        sha256,
    };
    write_json(&args.out.with_extension("json"), &record, "fuse")?;
    println!("fused {n} frames of {} into {}", burst.id, args.out.display());
    Ok(())
}

// --- noise ----------------------------------------------------------------

#[derive(Serialize)]
pub struct NoiseRecord {
    pub burst: String,
    pub mode: NoiseMode,
    pub seed: u64,
    pub burst_seed: u64,
    pub params: NoiseParams,
    pub frames: Vec<NoiseFrame>,
}

#[derive(Serialize)]
pub struct NoiseFrame {
    pub index: usize,
    pub stream: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sha256: Option<String>,
}

/// Re-quantize packed planes to sensor counts of `like`.
pub fn planar_to_frame(planar: &PlanarRaw, like: &BayerFrame) -> CliResult<BayerFrame> {
    let mosaic = planar.unpack();
    let (black, white) = (like.black_level() as f64, like.white_level() as f64);
    let samples = mosaic
        .data()
        .iter()
        .map(|v| (black + v * (white - black)).round() as u16)
        .collect();
    BayerFrame::new(
        mosaic.width(),
        mosaic.height(),
        samples,
        planar.pattern,
        like.black_level(),
        like.white_level(),
        like.frame_index(),
    )
    .at("noise", like.frame_index())
}

pub fn noise_cmd(args: &NoiseArgs, cfg: &PipelineConfig) -> CliResult<()> {
    let mut noise = cfg.noise;
    args.noise.apply(&mut noise);
    let seed = args.seed.unwrap_or(cfg.seed);
    let params = noise.resolve(seed, 0)?.ok_or_else(|| {
        Failure::config(
            "noise",
            "mode",
            "noise mode is off; pass --lambda-shot/--lambda-read or --sample",
        )
    })?;
    let burst = burst::load_any(&args.burst_dir)?;
    let burst_seed = seeds::burst_seed(seed, 0);
    create_dir(&args.out, "noise")?;
    let names: Vec<String> = burst
        .sources
        .iter()
        .map(|p| format!("{}.png", p.file_stem().unwrap_or_default().to_string_lossy()))
        .collect();
    let outputs: Vec<(String, String)> = match &burst.raw {
        Some(raw) => {
            let noisy = add_noise_planar_burst(&raw.planar, params, burst_seed).at("noise", &burst.id)?;
            noisy
                .par_iter()
                .zip(&raw.burst.frames)
                .zip(&names)
                .map(|((p, like), name)| {
                    let frame = planar_to_frame(p, like)?;
                    let path = args.out.join(name);
                    write_frame(&path, &frame, burst.iso, burst.lens.as_deref()).at("noise", path.display())?;
                    Ok((name.clone(), sha256_file(&path).at("noise", path.display())?))
                })
                .collect::<CliResult<_>>()?
        }
        None => {
            let noisy = add_noise_burst(&burst.rgb, params, burst_seed).at("noise", &burst.id)?;
            noisy
                .par_iter()
                .zip(&names)
                .map(|(img, name)| Ok((name.clone(), save_image(&args.out.join(name), img, "noise")?)))
                .collect::<CliResult<_>>()?
        }
    };
    let record = NoiseRecord {
        burst: burst.id.clone(),
        mode: noise.mode,
        seed,
        burst_seed,
        params,
        frames: outputs
            .into_iter()
            .enumerate()
            .map(|(i, (output, sha256))| NoiseFrame {
                index: i,
                stream: i as u64,
                output: Some(output),
                sha256: Some(sha256),
            })
            .collect(),
    };
    write_json(&args.out.join("noise.json"), &record, "noise")?;
    println!(
        "noised {} frames of {} (lambda_shot {:.6}, lambda_read {:.6})",
        record.frames.len(),
        burst.id,
        params.lambda_shot,
        params.lambda_read
    );
    Ok(())
}

// --- crops ----------------------------------------------------------------

/// Add one burst's crops to the manifest at `root`, replacing an earlier
/// entry with the same id.
pub fn merge_into_manifest(root: &Path, fresh: CropManifest) -> CliResult<CropManifest> {
    let path = manifest_path(root);
    let mut manifest = if path.exists() {
        CropManifest::read_json(&path).at("crops", path.display())?
    } else {
        CropManifest::new(fresh.crop_size)
    };
    if manifest.bursts.is_empty() {
        manifest.crop_size = fresh.crop_size;
    }
    let ids: Vec<&str> = fresh.bursts.iter().map(|b| b.id.as_str()).collect();
    manifest.bursts.retain(|b| !ids.contains(&b.id.as_str()));
    manifest
        .merge(fresh)
        .map_err(|e| Failure::config("crops", path.display(), e))?;
    Ok(manifest)
}

pub fn crops(args: &CropsArgs, cfg: &PipelineConfig) -> CliResult<()> {
    let size = args.size.unwrap_or(cfg.crops.size);
    let raw_mode = args.raw || cfg.crops.raw;
    let augment = if args.augment.is_empty() {
        cfg.crops.ops()?
    } else {
        parse_ops(&args.augment)?
    };
    let mut ecc = cfg.ecc;
    args.ecc.apply(&mut ecc);

    let burst = burst::load_any(&args.burst_dir)?;
    let id = args.id.clone().unwrap_or_else(|| burst.id.clone());
    let gt_path = args
        .gt
        .clone()
        .or_else(|| burst::ground_truth_path(&args.burst_dir))
        .ok_or_else(|| Failure::config("crops", &id, "no --gt given and no gt.png in the burst directory"))?;
    let gt = burst::read_rgb(&gt_path, "crops")?;

    let warps = if let Some(path) = &args.warps {
        Some(read_warps(path, burst.rgb.len(), "crops")?)
    } else if args.register {
        Some(register(&burst.rgb, &ecc, cfg.fail_on_divergence, &id)?.warps())
    } else {
        None
    };
    let rects = grid_crops(gt.width(), gt.height(), size).at("crops", &id)?;
    let lens = args.lens.clone().or_else(|| burst.lens.clone());
    let (planar, rgb);
    let frames = if raw_mode {
        let raw = burst
            .raw
            .as_ref()
            .ok_or_else(|| Failure::config("crops", &id, "--raw needs a raw burst directory"))?;
        planar = match &warps {
            Some(w) => align_planar(&raw.planar, w, &id)?,
            None => raw.planar.clone(),
        };
        BurstFrames::Raw(&planar)
    } else {
        rgb = match &warps {
            Some(w) => align_frames(&burst.rgb, w).at("crops", &id)?,
            None => burst.rgb.clone(),
        };
        BurstFrames::Rgb(&rgb)
    };
    let job = CropJob {
        id: &id,
        lens: lens.as_deref(),
        frames,
        ground_truth: &gt,
        rects: &rects,
        augment: &augment,
    };
    let manifest = cut(&job, size, &args.out)?;
    let count = manifest.crop_count();
    let merged = merge_into_manifest(&args.out, manifest)?;
    write_json(&manifest_path(&args.out), &merged, "crops")?;
    println!("wrote {count} crop records for {id} into {}", args.out.display());
    Ok(())
}

/// Cut one burst into `out`. The manifest keeps the requested crop size even
/// when the image is smaller than one crop and no rects were produced.
pub fn cut(job: &CropJob, size: usize, out: &Path) -> CliResult<CropManifest> {
    create_dir(out, "crops")?;
    let mut manifest = build_crop_dataset(job, out).at("crops", job.id)?;
    manifest.crop_size = size;
    Ok(manifest)
}

// --- split ----------------------------------------------------------------

pub fn parse_counts(specs: &[String]) -> CliResult<BTreeMap<String, SplitCounts>> {
    let mut counts = BTreeMap::new();
    for spec in specs {
        let bad = || Failure::config("split", spec, "expected LENS=TRAIN/TEST");
        let (lens, rest) = spec.split_once('=').ok_or_else(bad)?;
        let (train, test) = rest.split_once('/').ok_or_else(bad)?;
        let train = train.trim().parse().map_err(|_| bad())?;
        let test = test.trim().parse().map_err(|_| bad())?;
        counts.insert(lens.trim().to_string(), SplitCounts { train, test });
    }
    Ok(counts)
}

pub const UNKNOWN_LENS: &str = "unknown";

pub fn apply_split(manifest: &mut CropManifest, counts: &BTreeMap<String, SplitCounts>, seed: u64) -> CliResult<()> {
    let pairs: Vec<(String, String)> = manifest
        .bursts
        .iter()
        .map(|b| (b.id.clone(), b.lens.clone().unwrap_or_else(|| UNKNOWN_LENS.to_string())))
        .collect();
    let assignment = split_manifest(&pairs, counts, seed).at("split", "manifest")?;
    manifest.apply_split(&assignment, seed);
    Ok(())
}

pub fn split(args: &SplitArgs, cfg: &PipelineConfig) -> CliResult<()> {
    let counts = if args.counts.is_empty() {
        cfg.split.counts.clone()
    } else {
        parse_counts(&args.counts)?
    };
    if counts.is_empty() {
        return Err(Failure::config("split", "counts", "no split counts given"));
    }
    let seed = args.seed.unwrap_or(cfg.seed);
    let mut manifest = CropManifest::read_json(&args.manifest).at("split", args.manifest.display())?;
    apply_split(&mut manifest, &counts, seed)?;
    let out = args.out.clone().unwrap_or_else(|| args.manifest.clone());
    write_json(&out, &manifest, "split")?;
    let tally = |s| manifest.bursts.iter().filter(|b| b.split == Some(s)).count();
    println!(
        "{} train / {} test bursts",
        tally(fstack_core::Split::Train),
        tally(fstack_core::Split::Test)
    );
    Ok(())
}

// --- eval -----------------------------------------------------------------

fn image_files(dir: &Path) -> CliResult<BTreeMap<String, PathBuf>> {
    let mut files = BTreeMap::new();
    for entry in fs::read_dir(dir).at("eval", dir.display())?.flatten() {
        let p = entry.path();
        let ext = p.extension().map(|e| e.to_string_lossy().to_ascii_lowercase());
        if matches!(ext.as_deref(), Some("png" | "pfm")) {
            let stem = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            files.insert(stem, p);
        }
    }
    Ok(files)
}

pub fn eval(args: &EvalArgs, cfg: &PipelineConfig) -> CliResult<()> {
    let border = args.border.unwrap_or(cfg.eval.ignore_border);
    let pairs: Vec<(String, PathBuf, PathBuf)> = if args.pred.is_dir() {
        if !args.gt.is_dir() {
            return Err(Failure::config(
                "eval",
                args.gt.display(),
                "--pred is a directory, so --gt must be one too",
            ));
        }
        let preds = image_files(&args.pred)?;
        let gts = image_files(&args.gt)?;
        let mut pairs = Vec::new();
        for (id, p) in preds {
            match gts.get(&id) {
                Some(g) => pairs.push((id, p, g.clone())),
                None => log::warn!("{}: no ground truth named {id}; skipped", p.display()),
            }
        }
        if pairs.is_empty() {
            return Err(Failure::data(
                "eval",
                args.pred.display(),
                "no prediction has a matching ground truth",
            ));
        }
        pairs
    } else {
        let id = args
            .id
            .clone()
            .unwrap_or_else(|| args.pred.file_stem().unwrap_or_default().to_string_lossy().into_owned());
        vec![(id, args.pred.clone(), args.gt.clone())]
    };
    let splits: BTreeMap<String, String> = match &args.manifest {
        Some(path) => CropManifest::read_json(path)
            .at("eval", path.display())?
            .bursts
            .into_iter()
            .filter_map(|b| Some((b.id, b.split?.to_string())))
            .collect(),
        None => BTreeMap::new(),
    };
    let images = pairs
        .par_iter()
        .map(|(id, p, g)| {
            let pred = read_image(p).at("eval", p.display())?;
            let gt = read_image(g).at("eval", g.display())?;
            Ok((id.clone(), pred, gt))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let items = images
        .iter()
        .map(|(id, pred, gt)| EvalItem {
            id: id.clone(),
            split: splits.get(id).cloned(),
            prediction: pred,
            ground_truth: gt,
        })
        .collect();
    let report = evaluate_items(items, border).at("eval", args.pred.display())?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent, "eval")?;
    }
    write_json(&args.out, &report, "eval")?;
    println!(
        "{} items: mean PSNR {:.3} dB, mean SSIM {:.4}",
        report.items.len(),
        report.mean_psnr,
        report.mean_ssim
    );
    Ok(())
}

// --- fixture --------------------------------------------------------------

pub fn fixture(args: &FixtureArgs) -> CliResult<()> {
    if args.size < 16 || !args.size.is_multiple_of(2) || args.frames == 0 {
        return Err(Failure::config(
            "fixture",
            "args",
            "size must be even and >= 16, frames >= 1",
        ));
    }
    fstack_core::synth::write_fixture_burst(&args.out, args.size, args.frames, args.seed)
        .at("fixture", args.out.display())?;
    println!(
        "wrote {}-frame {}x{} fixture to {}",
        args.frames,
        args.size,
        args.size,
        args.out.display()
    );
    Ok(())
}
