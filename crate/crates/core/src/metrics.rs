//! Full-reference quality metrics and evaluation reports.
//!
//! PSNR pools the squared error over every channel. SSIM is the single-scale
//! index with an 11×11 Gaussian window (σ = 1.5), K1 = 0.01, K2 = 0.03 and
//! unit dynamic range, evaluated on fully covered windows only, averaged per
//! channel and then across channels. Both exclude an `ignore_border` ring.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::filter;
use crate::image::Image;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Border convention of the evaluation protocol.
pub const DEFAULT_IGNORE_BORDER: usize = 4;

fn interior(a: &Image, b: &Image, ignore_border: usize) -> Result<(Image, Image)> {
    a.ensure_same_shape(b)?;
    if 2 * ignore_border >= a.width().min(a.height()) {
        return Err(Error::InvalidParameter(format!(
            "border {ignore_border} leaves nothing of {}x{}",
            a.width(),
            a.height()
        )));
    }
    if ignore_border == 0 {
        return Ok((a.clone(), b.clone()));
    }
    let (w, h) = (a.width() - 2 * ignore_border, a.height() - 2 * ignore_border);
    Ok((
        a.crop(ignore_border, ignore_border, w, h)?,
        b.crop(ignore_border, ignore_border, w, h)?,
    ))
}

/// Peak signal-to-noise ratio in dB; `+inf` for identical interiors.
pub fn psnr(a: &Image, b: &Image, peak: f64, ignore_border: usize) -> Result<f64> {
    if !(peak > 0.0) {
        return Err(Error::InvalidParameter(format!("peak must be positive, got {peak}")));
    }
    let (a, b) = interior(a, b, ignore_border)?;
    let sse: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum();
    let mse = sse / a.data().len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Correlate with `k` along both axes keeping only fully covered outputs.
fn filter_valid(plane: &[f64], w: usize, h: usize, k: &[f64]) -> (Vec<f64>, usize, usize) {
    let n = k.len();
    let (ow, oh) = (w + 1 - n, h + 1 - n);
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        for x in 0..ow {
            tmp[y * ow + x] = k.iter().zip(&row[x..x + n]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for (i, kv) in k.iter().enumerate() {
            let src = &tmp[(y + i) * ow..(y + i + 1) * ow];
            for (o, s) in out[y * ow..(y + 1) * ow].iter_mut().zip(src) {
                *o += kv * s;
            }
        }
    }
    (out, ow, oh)
}

fn ssim_plane(a: &[f64], b: &[f64], w: usize, h: usize) -> f64 {
    let k = filter::gaussian_kernel(SSIM_SIGMA);
    debug_assert_eq!(k.len(), SSIM_WINDOW);
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let aa: Vec<f64> = a.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = b.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    let (mu_a, _, _) = filter_valid(a, w, h, &k);
    let (mu_b, _, _) = filter_valid(b, w, h, &k);
    let (e_aa, _, _) = filter_valid(&aa, w, h, &k);
    let (e_bb, _, _) = filter_valid(&bb, w, h, &k);
    let (e_ab, ow, oh) = filter_valid(&ab, w, h, &k);
    let mut sum = 0.0;
    for i in 0..ow * oh {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    sum / (ow * oh) as f64
}

/// Mean structural similarity of the interiors of two images in `[0, 1]`.
pub fn ssim(a: &Image, b: &Image, ignore_border: usize) -> Result<f64> {
    let (a, b) = interior(a, b, ignore_border)?;
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::TooSmall(format!(
            "{w}x{h} interior is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )));
    }
    if a == b {
        return Ok(1.0);
    }
    let total: f64 = (0..a.channels())
        .map(|c| ssim_plane(a.plane(c), b.plane(c), w, h))
        .sum();
    Ok(total / a.channels() as f64)
}

fn ser_db<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() && *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

fn de_db<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Db {
        Num(f64),
        Text(String),
    }
    match Db::deserialize(d)? {
        Db::Num(v) => Ok(v),
        Db::Text(t) if t == "inf" => Ok(f64::INFINITY),
        Db::Text(t) => Err(serde::de::Error::custom(format!("bad dB value {t:?}"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemScore {
    pub id: String,
    #[serde(serialize_with = "ser_db", deserialize_with = "de_db")]
    pub psnr: f64,
    pub ssim: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub split: String,
    #[serde(serialize_with = "ser_db", deserialize_with = "de_db")]
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    pub count: usize,
}

/// `report.json`. An infinite PSNR is written as the string `"inf"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub ignore_border: usize,
    #[serde(default = "pooled_rgb")]
    pub psnr_convention: String,
    pub items: Vec<ItemScore>,
    #[serde(serialize_with = "ser_db", deserialize_with = "de_db")]
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub splits: Vec<SplitSummary>,
}

fn pooled_rgb() -> String {
    "mse pooled over all channels, peak 1.0".into()
}

impl QualityReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

/// One scored pair: prediction and ground truth with a shared id and an
/// optional split label.
pub struct EvalItem<'a> {
    pub id: String,
    pub split: Option<String>,
    pub prediction: &'a Image,
    pub ground_truth: &'a Image,
}

/// Score matching `(id, image)` lists; items are reported sorted by id.
pub fn evaluate(
    outputs: &[(String, Image)],
    ground_truths: &[(String, Image)],
    ignore_border: usize,
) -> Result<QualityReport> {
    let gt: BTreeMap<&str, &Image> = ground_truths.iter().map(|(id, im)| (id.as_str(), im)).collect();
    if gt.len() != ground_truths.len() {
        return Err(Error::IdMismatch("duplicate ground-truth id".into()));
    }
    let mut items = Vec::with_capacity(outputs.len());
    for (id, img) in outputs {
        let truth = gt
            .get(id.as_str())
            .ok_or_else(|| Error::IdMismatch(format!("no ground truth for {id:?}")))?;
        items.push(EvalItem {
            id: id.clone(),
            split: None,
            prediction: img,
            ground_truth: truth,
        });
    }
    if outputs.len() != ground_truths.len() {
        return Err(Error::IdMismatch(format!(
            "{} outputs vs {} ground truths",
            outputs.len(),
            ground_truths.len()
        )));
    }
    evaluate_items(items, ignore_border)
}

/// Score labelled items and add per-split means.
pub fn evaluate_items(mut items: Vec<EvalItem<'_>>, ignore_border: usize) -> Result<QualityReport> {
    if items.is_empty() {
        return Err(Error::NoItems);
    }
    items.sort_by(|a, b| a.id.cmp(&b.id));
    if let Some(pair) = items.windows(2).find(|p| p[0].id == p[1].id) {
        return Err(Error::IdMismatch(format!("duplicate id {:?}", pair[0].id)));
    }
    let scores = items
        .par_iter()
        .map(|it| {
            Ok(ItemScore {
                id: it.id.clone(),
                psnr: psnr(it.prediction, it.ground_truth, 1.0, ignore_border)?,
                ssim: ssim(it.prediction, it.ground_truth, ignore_border)?,
                split: it.split.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut by_split: BTreeMap<&str, Vec<&ItemScore>> = BTreeMap::new();
    for s in &scores {
        if let Some(split) = &s.split {
            by_split.entry(split).or_default().push(s);
        }
    }
    let splits = by_split
        .into_iter()
        .map(|(split, v)| SplitSummary {
            split: split.to_owned(),
            mean_psnr: mean(v.iter().map(|s| s.psnr)),
            mean_ssim: mean(v.iter().map(|s| s.ssim)),
            count: v.len(),
        })
        .collect();
    Ok(QualityReport {
        ignore_border,
        psnr_convention: pooled_rgb(),
        mean_psnr: mean(scores.iter().map(|s| s.psnr)),
        mean_ssim: mean(scores.iter().map(|s| s.ssim)),
        items: scores,
        splits,
    })
}
