//! End-to-end run over one or more raw bursts.
//!
//! Bursts are processed one after another in name order; each stage
//! parallelizes internally. All records use paths relative to the output
//! directory, so two runs with the same inputs and seed write identical bytes.

use std::collections::BTreeMap;
use std::path::Path;

use fstack_core::dataset::{manifest_path, BurstFrames, CropJob, CropManifest};
use fstack_core::metrics::{evaluate_items, EvalItem};
use fstack_core::noise::add_noise_planar_burst;
use fstack_core::raw::demosaic_planar;
use fstack_core::register::align_frames;
use fstack_core::{AffineWarp, Image, NoiseParams};
use rayon::prelude::*;
use serde::Serialize;

use crate::args::PipelineArgs;
use crate::burst;
use crate::commands::{
    align_planar, apply_split, cut, file_name, fuse_frames, ingest_record, parse_counts, register, save_image,
    write_json, NoiseFrame, NoiseRecord, StackRecord,
};
use crate::config::{parse_ops, PipelineConfig, StageToggles};
use crate::error::{AtStage, CliResult, Failure};
use crate::seeds;

/// Fold pipeline flags into the configuration.
pub fn apply_flags(args: &PipelineArgs, cfg: &mut PipelineConfig) -> CliResult<()> {
    if let Some(p) = &args.input {
        cfg.input = Some(p.clone());
    }
    if let Some(p) = &args.out {
        cfg.output = Some(p.clone());
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    for stage in &args.skip {
        stage.disable(&mut cfg.stages);
    }
    if let Some(s) = args.crop_size {
        cfg.crops.size = s;
    }
    cfg.crops.raw |= args.raw_crops;
    if !args.augment.is_empty() {
        cfg.crops.augment = args.augment.clone();
    }
    if !args.counts.is_empty() {
        cfg.split.counts = parse_counts(&args.counts)?;
    }
    if let Some(b) = args.border {
        cfg.eval.ignore_border = b;
    }
    cfg.fail_on_divergence |= args.fail_on_divergence;
    args.ecc.apply(&mut cfg.ecc);
    args.fusion.apply(&mut cfg.fusion);
    args.noise.apply(&mut cfg.noise);
    Ok(())
}

#[derive(Serialize)]
struct BurstSummary {
    id: String,
    frames: usize,
    diverged: Vec<usize>,
    noise: Option<NoiseParams>,
    fused: Option<String>,
    ground_truth: Option<String>,
    crops: usize,
}

#[derive(Serialize)]
struct PipelineRecord {
    config: PipelineConfig,
    stages: StageToggles,
    bursts: Vec<BurstSummary>,
    crop_manifest: Option<String>,
    report: Option<String>,
}

struct Scored {
    id: String,
    fused: Image,
    gt: Image,
}

pub fn run(args: &PipelineArgs, mut cfg: PipelineConfig) -> CliResult<()> {
    apply_flags(args, &mut cfg)?;
    cfg.validate()?;
    let input = cfg
        .input
        .clone()
        .ok_or_else(|| Failure::config("pipeline", "input", "no input directory (--input or config `input`)"))?;
    let out = cfg
        .output
        .clone()
        .ok_or_else(|| Failure::config("pipeline", "output", "no output directory (--out or config `output`)"))?;
    let ops = parse_ops(&cfg.crops.augment)?;
    let stages = cfg.stages;

    let dirs = burst::discover(&input)?;
    log::info!("{} burst(s) under {}", dirs.len(), input.display());
    let crops_root = out.join("crops");
    let mut manifest = CropManifest::new(cfg.crops.size);
    let mut summaries = Vec::new();
    let mut scored = Vec::new();

    for (b, dir) in dirs.iter().enumerate() {
        let burst = burst::load_raw(dir)?;
        let id = burst.id.clone();
        let raw = burst.raw.as_ref().expect("discovered bursts are raw");
        let burst_out = out.join(&id);
        crate::commands::create_dir(&burst_out, "ingest")?;
        write_json(&burst_out.join("ingest.json"), &ingest_record(&burst, &[]), "ingest")?;

        let (warps, diverged) = if stages.register {
            let result = register(&burst.rgb, &cfg.ecc, cfg.fail_on_divergence, &id)?;
            write_json(&burst_out.join("warps.json"), &result.to_file(), "register")?;
            (result.warps(), result.diverged())
        } else {
            (vec![AffineWarp::identity(); burst.rgb.len()], Vec::new())
        };

        let noise = cfg.noise.resolve(cfg.seed, b)?;
        let want_planar = noise.is_some() || (stages.crops && cfg.crops.raw);
        let mut planar = if want_planar {
            Some(if stages.register {
                align_planar(&raw.planar, &warps, &id)?
            } else {
                raw.planar.clone()
            })
        } else {
            None
        };

        let frames: Vec<Image> = if let Some(params) = noise {
            let burst_seed = seeds::burst_seed(cfg.seed, b);
            let aligned = planar.as_ref().expect("noise works on planar frames");
            let noisy = add_noise_planar_burst(aligned, params, burst_seed).at("noise", &id)?;
            let rgb = noisy.par_iter().map(demosaic_planar).collect();
            let record = NoiseRecord {
                burst: id.clone(),
                mode: cfg.noise.mode,
                seed: cfg.seed,
                burst_seed,
                params,
                frames: (0..noisy.len())
                    .map(|i| NoiseFrame {
                        index: i,
                        stream: i as u64,
                        output: None,
                        sha256: None,
                    })
                    .collect(),
            };
            write_json(&burst_out.join("noise.json"), &record, "noise")?;
            planar = Some(noisy);
            rgb
        } else if stages.register {
            align_frames(&burst.rgb, &warps).at("register", &id)?
        } else {
            burst.rgb.clone()
        };

        let fused = if stages.fuse {
            let fused = fuse_frames(frames.clone(), &cfg.fusion, &id)?.image;
            let path = burst_out.join("fused.png");
            let sha256 = save_image(&path, &fused, "fuse")?;
            let record = StackRecord {
                burst: id.clone(),
                frames: burst.sources.iter().map(|p| file_name(p)).collect(),
                fusion: cfg.fusion,
                warps: stages.register.then(|| "warps.json".to_string()),
                diverged: diverged.clone(),
                output: "fused.png".into(),
                sha256,
            };
            write_json(&burst_out.join("fused.json"), &record, "fuse")?;
            Some(fused)
        } else {
            None
        };

        let gt_file = burst::ground_truth_path(dir);
        let gt = match &gt_file {
            Some(p) => Some(burst::read_rgb(p, "crops")?),
            None => fused.clone(),
        };
        let gt_label = match (&gt_file, &gt) {
            (Some(p), _) => Some(file_name(p)),
            (None, Some(_)) => Some("fused.png".to_string()),
            _ => None,
        };

        let mut crop_count = 0;
        if stages.crops {
            match &gt {
                Some(gt) => {
                    let rects =
                        fstack_core::dataset::grid_crops(gt.width(), gt.height(), cfg.crops.size).at("crops", &id)?;
                    let frames = match &planar {
                        Some(p) if cfg.crops.raw => BurstFrames::Raw(p),
                        _ => BurstFrames::Rgb(&frames),
                    };
                    let job = CropJob {
                        id: &id,
                        lens: burst.lens.as_deref(),
                        frames,
                        ground_truth: gt,
                        rects: &rects,
                        augment: &ops,
                    };
                    let part = cut(&job, cfg.crops.size, &crops_root)?;
                    crop_count = part.crop_count();
                    manifest.merge(part).map_err(|e| Failure::data("crops", &id, e))?;
                }
                None => log::warn!("{id}: no ground truth and no fused image; crops skipped"),
            }
        }

        if let (Some(fused), Some(_), Some(gt)) = (&fused, &gt_file, &gt) {
            scored.push(Scored {
                id: id.clone(),
                fused: fused.clone(),
                gt: gt.clone(),
            });
        }

        summaries.push(BurstSummary {
            id: id.clone(),
            frames: burst.rgb.len(),
            diverged,
            noise,
            fused: fused.as_ref().map(|_| format!("{id}/fused.png")),
            ground_truth: gt_label,
            crops: crop_count,
        });
        log::info!("{id}: done");
    }

    if !cfg.split.counts.is_empty() {
        apply_split(&mut manifest, &cfg.split.counts, cfg.seed)?;
    }
    let crop_manifest = if stages.crops {
        crate::commands::create_dir(&crops_root, "crops")?;
        write_json(&manifest_path(&crops_root), &manifest, "crops")?;
        Some(relative(&manifest_path(&crops_root), &out))
    } else {
        None
    };

    let report = if stages.eval && !scored.is_empty() {
        let splits: BTreeMap<&str, String> = manifest
            .bursts
            .iter()
            .filter_map(|b| Some((b.id.as_str(), b.split?.to_string())))
            .collect();
        let items = scored
            .iter()
            .map(|s| EvalItem {
                id: s.id.clone(),
                split: splits.get(s.id.as_str()).cloned(),
                prediction: &s.fused,
                ground_truth: &s.gt,
            })
            .collect();
        let report = evaluate_items(items, cfg.eval.ignore_border).at("eval", "pipeline")?;
        write_json(&out.join("report.json"), &report, "eval")?;
        println!(
            "{} bursts: mean PSNR {:.3} dB, mean SSIM {:.4}",
            report.items.len(),
            report.mean_psnr,
            report.mean_ssim
        );
        Some("report.json".to_string())
    } else {
        if stages.eval {
            log::warn!("no fused image has a ground truth file; evaluation skipped");
        }
        None
    };

    let record = PipelineRecord {
        config: cfg.record(),
        stages,
        bursts: summaries,
        crop_manifest,
        report,
    };
    write_json(&out.join("pipeline.json"), &record, "pipeline")?;
    println!("pipeline finished: {} burst(s) into {}", dirs.len(), out.display());
    Ok(())
}

fn relative(path: &Path, base: &Path) -> String {
    path.strip_prefix(base)
        .unwrap_or(path)
        .to_string_lossy()
        .replace('\\', "/")
}
