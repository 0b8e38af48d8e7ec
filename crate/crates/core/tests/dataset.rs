use std::collections::BTreeMap;

use fstack_core::dataset::{
    augment, augment_planar, build_crop_dataset, grid_crops, load_crop, split_manifest, BurstFrames, CropFrames,
    CropJob, CropManifest, CropRect, Split, SplitCounts,
};
use fstack_core::io::quantize_image;
use fstack_core::raw::{pack_normalized, CfaColor};
use fstack_core::{AugmentOp, BayerPattern, Error, Image, PlanarRaw};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_image(w: usize, h: usize, c: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Image::from_fn(w, h, c, |_, _, _| rng.random::<f64>())
}

// --- independent dihedral oracle written with inverse pixel maps ---

fn rot90_ccw(img: &Image) -> Image {
    let n = img.width();
    Image::from_fn(n, n, img.channels(), |c, x, y| img.get(c, n - 1 - y, x))
}

fn hflip(img: &Image) -> Image {
    let w = img.width();
    Image::from_fn(w, img.height(), img.channels(), |c, x, y| img.get(c, w - 1 - x, y))
}

fn dihedral(img: &Image, op: AugmentOp) -> Image {
    let mut out = if op.hflip { hflip(img) } else { img.clone() };
    for _ in 0..op.rotation / 90 {
        out = rot90_ccw(&out);
    }
    out
}

fn color_code(c: CfaColor) -> f64 {
    match c {
        CfaColor::Red => 0.0,
        CfaColor::Green => 1.0,
        CfaColor::Blue => 2.0,
    }
}

/// Pattern of the transformed mosaic, read off a transformed color map.
fn oracle_pattern(pattern: BayerPattern, op: AugmentOp) -> BayerPattern {
    let colors = Image::from_fn(4, 4, 1, |_, x, y| color_code(pattern.color_at(x, y)));
    let moved = dihedral(&colors, op);
    let decode = |v: f64| match v as u8 {
        0 => CfaColor::Red,
        1 => CfaColor::Green,
        _ => CfaColor::Blue,
    };
    let cell = [
        [decode(moved.get(0, 0, 0)), decode(moved.get(0, 1, 0))],
        [decode(moved.get(0, 0, 1)), decode(moved.get(0, 1, 1))],
    ];
    BayerPattern::from_cell(cell).unwrap()
}

#[test]
fn augmentation_commutes_with_mosaicking() {
    for pattern in BayerPattern::ALL {
        let mosaic = random_image(16, 16, 1, 1);
        let packed = pack_normalized(&mosaic, pattern).unwrap();
        for op in AugmentOp::all() {
            let expect = pack_normalized(&dihedral(&mosaic, op), oracle_pattern(pattern, op)).unwrap();
            let got = augment_planar(&packed, op).unwrap();
            assert_eq!(got.pattern, expect.pattern, "{pattern:?} {op}");
            assert_eq!(got.image.data(), expect.image.data(), "{pattern:?} {op}");
        }
    }
}

/// Resulting pattern and source plane (R, G1, G2, B order) of each output
/// plane for an RGGB crop, per op in `AugmentOp::all()` order.
const RGGB_TABLE: [(BayerPattern, [usize; 4]); 8] = [
    (BayerPattern::Rggb, [0, 1, 2, 3]),
    (BayerPattern::Gbrg, [0, 1, 2, 3]),
    (BayerPattern::Bggr, [0, 2, 1, 3]),
    (BayerPattern::Grbg, [0, 2, 1, 3]),
    (BayerPattern::Grbg, [0, 1, 2, 3]),
    (BayerPattern::Rggb, [0, 2, 1, 3]),
    (BayerPattern::Gbrg, [0, 2, 1, 3]),
    (BayerPattern::Bggr, [0, 1, 2, 3]),
];

#[test]
fn rggb_plane_table_is_frozen() {
    let planes = Image::from_fn(3, 3, 4, |c, _, _| c as f64);
    let raw = PlanarRaw::new(planes, BayerPattern::Rggb).unwrap();
    for (op, (pattern, sources)) in AugmentOp::all().into_iter().zip(RGGB_TABLE) {
        let out = augment_planar(&raw, op).unwrap();
        let observed: Vec<usize> = (0..4).map(|c| out.image.plane(c)[0] as usize).collect();
        assert_eq!(out.pattern, pattern, "{op}");
        assert_eq!(observed, sources, "{op}");
        assert_eq!(oracle_pattern(BayerPattern::Rggb, op), pattern);
    }
}

#[test]
fn image_augmentation_matches_oracle() {
    let img = random_image(9, 9, 3, 2);
    for op in AugmentOp::all() {
        assert_eq!(augment(&img, op).unwrap().data(), dihedral(&img, op).data(), "{op}");
    }
}

#[test]
fn dihedral_group_laws() {
    let img = random_image(6, 6, 2, 3);
    let r90 = AugmentOp::new(90, false).unwrap();
    let flip = AugmentOp::new(0, true).unwrap();
    assert_eq!(augment(&img, AugmentOp::IDENTITY).unwrap().data(), img.data());
    let twice = augment(&augment(&img, flip).unwrap(), flip).unwrap();
    assert_eq!(twice.data(), img.data());
    let mut four = img.clone();
    for _ in 0..4 {
        four = augment(&four, r90).unwrap();
    }
    assert_eq!(four.data(), img.data());
    for a in AugmentOp::all() {
        assert_eq!(a.then(a.inverse()), AugmentOp::IDENTITY);
        for b in AugmentOp::all() {
            let sequential = augment(&augment(&img, a).unwrap(), b).unwrap();
            assert_eq!(
                augment(&img, a.then(b)).unwrap().data(),
                sequential.data(),
                "{a} then {b}"
            );
            let raw = PlanarRaw::new(random_image(4, 4, 4, 4), BayerPattern::Grbg).unwrap();
            let seq_raw = augment_planar(&augment_planar(&raw, a).unwrap(), b).unwrap();
            let direct = augment_planar(&raw, a.then(b)).unwrap();
            assert_eq!(seq_raw.pattern, direct.pattern);
            assert_eq!(seq_raw.image.data(), direct.image.data());
        }
    }
    let set: std::collections::HashSet<AugmentOp> = AugmentOp::all()
        .iter()
        .flat_map(|a| AugmentOp::all().map(|b| a.then(b)))
        .collect();
    assert_eq!(set.len(), 8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn grid_tiles_without_overlap(w in 1usize..300, h in 1usize..300, half in 1usize..40) {
        let size = 2 * half;
        let rects = grid_crops(w, h, size).unwrap();
        let mut cover = vec![0u8; w * h];
        for r in &rects {
            prop_assert!(r.fits(w, h));
            for y in r.y..r.y + size {
                for x in r.x..r.x + size {
                    cover[y * w + x] += 1;
                }
            }
        }
        prop_assert!(cover.iter().all(|&c| c <= 1));
        prop_assert_eq!(cover.iter().filter(|&&c| c == 1).count(), rects.len() * size * size);
        prop_assert_eq!(rects.len(), (w / size) * (h / size));
    }
}

#[test]
fn thirty_frame_burst_yields_1200_records() {
    let dir = tempfile::tempdir().unwrap();
    let frames: Vec<Image> = (0..30).map(|i| random_image(160, 120, 3, 100 + i)).collect();
    let gt = random_image(160, 120, 3, 99);
    let rects = grid_crops(160, 120, 4).unwrap();
    assert_eq!(rects.len(), 1200);
    let job = CropJob {
        id: "b000",
        lens: Some("leica"),
        frames: BurstFrames::Rgb(&frames),
        ground_truth: &gt,
        rects: &rects,
        augment: &[],
    };
    let manifest = build_crop_dataset(&job, dir.path()).unwrap();
    let burst = &manifest.bursts[0];
    assert_eq!(burst.crops.len(), 1200);
    assert!(burst.crops.iter().all(|c| c.frames.len() == 30 && c.sha256.len() == 31));
    manifest.verify(dir.path()).unwrap();
    for record in burst.crops.iter().step_by(97) {
        let (loaded, gt_crop) = load_crop(dir.path(), record).unwrap();
        let CropFrames::Rgb(loaded) = loaded else {
            panic!("expected RGB crops")
        };
        for (i, crop) in loaded.iter().enumerate() {
            let src = frames[i].crop(record.x, record.y, 4, 4).unwrap();
            assert_eq!(crop.data(), quantize_image(&src).data());
        }
        assert_eq!(
            gt_crop.data(),
            quantize_image(&gt.crop(record.x, record.y, 4, 4).unwrap()).data()
        );
    }
}

#[test]
fn raw_crops_use_halved_plane_rects() {
    let dir = tempfile::tempdir().unwrap();
    let frames: Vec<PlanarRaw> = (0..2)
        .map(|i| PlanarRaw::new(random_image(256, 160, 4, 10 + i), BayerPattern::Rggb).unwrap())
        .collect();
    let gt = random_image(512, 320, 3, 9);
    let rect = CropRect::new(256, 128, 128).unwrap();
    let job = CropJob {
        id: "raw",
        lens: None,
        frames: BurstFrames::Raw(&frames),
        ground_truth: &gt,
        rects: &[rect],
        augment: &[],
    };
    let manifest = build_crop_dataset(&job, dir.path()).unwrap();
    let record = &manifest.bursts[0].crops[0];
    assert_eq!(record.pattern, Some(BayerPattern::Rggb));
    let (loaded, gt_crop) = load_crop(dir.path(), record).unwrap();
    let CropFrames::Raw(loaded) = loaded else {
        panic!("expected raw crops")
    };
    for (crop, frame) in loaded.iter().zip(&frames) {
        assert_eq!(crop.image.shape_string(), "64x64x4");
        let src = frame.image.crop(128, 64, 64, 64).unwrap();
        assert_eq!(crop.image.data(), quantize_image(&src).data());
    }
    assert_eq!(gt_crop.shape_string(), "128x128x3");
}

#[test]
fn augmented_raw_crops_record_their_pattern() {
    let dir = tempfile::tempdir().unwrap();
    let frames = vec![PlanarRaw::new(random_image(8, 8, 4, 1), BayerPattern::Rggb).unwrap()];
    let gt = random_image(16, 16, 3, 2);
    let rects = grid_crops(16, 16, 8).unwrap();
    let ops = AugmentOp::all();
    let job = CropJob {
        id: "aug",
        lens: None,
        frames: BurstFrames::Raw(&frames),
        ground_truth: &gt,
        rects: &rects,
        augment: &ops,
    };
    let manifest = build_crop_dataset(&job, dir.path()).unwrap();
    assert_eq!(manifest.bursts[0].crops.len(), 4 * 8);
    for record in &manifest.bursts[0].crops {
        let op = record.augment.unwrap();
        assert_eq!(record.pattern, Some(op.transform_pattern(BayerPattern::Rggb)));
        let (loaded, gt_crop) = load_crop(dir.path(), record).unwrap();
        let CropFrames::Raw(loaded) = loaded else {
            panic!("expected raw crops")
        };
        let p = record.rect().plane_rect();
        let src = PlanarRaw::new(
            frames[0].image.crop(p.x, p.y, p.size, p.size).unwrap(),
            BayerPattern::Rggb,
        )
        .unwrap();
        let expect = augment_planar(&src, op).unwrap();
        assert_eq!(loaded[0].image.data(), quantize_image(&expect.image).data());
        let gt_src = gt.crop(record.x, record.y, 8, 8).unwrap();
        assert_eq!(gt_crop.data(), quantize_image(&augment(&gt_src, op).unwrap()).data());
    }
}

#[test]
fn tampering_breaks_verification_and_manifest_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let frames = vec![random_image(16, 16, 3, 1), random_image(16, 16, 3, 2)];
    let gt = random_image(16, 16, 3, 3);
    let rects = grid_crops(16, 16, 8).unwrap();
    let job = CropJob {
        id: "t",
        lens: Some("olympus"),
        frames: BurstFrames::Rgb(&frames),
        ground_truth: &gt,
        rects: &rects,
        augment: &[],
    };
    let manifest = build_crop_dataset(&job, dir.path()).unwrap();
    let path = dir.path().join("manifest.json");
    manifest.write_json(&path).unwrap();
    let first = std::fs::read(&path).unwrap();
    let reread = CropManifest::read_json(&path).unwrap();
    assert_eq!(reread, manifest);
    reread.write_json(&path).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), first);

    let victim = dir.path().join(&manifest.bursts[0].crops[2].frames[1]);
    let mut img = fstack_core::io::read_image(&victim).unwrap();
    img.set(0, 0, 0, 1.0 - img.get(0, 0, 0));
    fstack_core::io::write_png16(&victim, &img).unwrap();
    assert!(matches!(manifest.verify(dir.path()), Err(Error::Checksum(p)) if p == victim));
}

#[test]
fn crop_building_rejects_bad_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let frames = vec![random_image(16, 16, 3, 1)];
    let small_gt = random_image(8, 16, 3, 1);
    let rects = grid_crops(16, 16, 8).unwrap();
    let mut job = CropJob {
        id: "bad",
        lens: None,
        frames: BurstFrames::Rgb(&frames),
        ground_truth: &small_gt,
        rects: &rects,
        augment: &[],
    };
    assert!(build_crop_dataset(&job, dir.path()).is_err());
    let gt = random_image(16, 16, 3, 1);
    let outside = [CropRect::new(12, 0, 8).unwrap()];
    job.ground_truth = &gt;
    job.rects = &outside;
    assert!(build_crop_dataset(&job, dir.path()).is_err());
}

fn lsfd_bursts() -> Vec<(String, String)> {
    let mut bursts = Vec::new();
    for i in 0..52 {
        bursts.push((format!("leica_{i:03}"), "leica".to_string()));
    }
    for i in 0..42 {
        bursts.push((format!("olympus_{i:03}"), "olympus".to_string()));
    }
    bursts
}

fn table2_counts() -> BTreeMap<String, SplitCounts> {
    BTreeMap::from([
        ("leica".to_string(), SplitCounts { train: 47, test: 5 }),
        ("olympus".to_string(), SplitCounts { train: 37, test: 5 }),
    ])
}

#[test]
fn split_honours_per_lens_counts() {
    let bursts = lsfd_bursts();
    let assignment = split_manifest(&bursts, &table2_counts(), 7).unwrap();
    let count = |s: Split| assignment.values().filter(|v| **v == s).count();
    assert_eq!((count(Split::Train), count(Split::Test)), (84, 10));
    for lens in ["leica", "olympus"] {
        let tests = assignment
            .iter()
            .filter(|(id, s)| id.starts_with(lens) && **s == Split::Test)
            .count();
        assert_eq!(tests, 5);
    }
    assert_eq!(assignment, split_manifest(&bursts, &table2_counts(), 7).unwrap());
    let mut reversed = bursts.clone();
    reversed.reverse();
    assert_eq!(assignment, split_manifest(&reversed, &table2_counts(), 7).unwrap());
    assert_ne!(assignment, split_manifest(&bursts, &table2_counts(), 8).unwrap());
}

#[test]
fn split_rejects_oversubscription() {
    let counts = BTreeMap::from([("leica".to_string(), SplitCounts { train: 50, test: 5 })]);
    let err = split_manifest(&lsfd_bursts(), &counts, 1).unwrap_err();
    assert!(matches!(
        err,
        Error::InsufficientBursts {
            requested: 55,
            available: 52,
            ..
        }
    ));
}

#[test]
fn applied_split_is_burst_level() {
    let mut manifest = CropManifest::new(4);
    for (id, lens) in lsfd_bursts().into_iter().take(6) {
        manifest.bursts.push(fstack_core::dataset::BurstCrops {
            id,
            lens: Some(lens),
            split: None,
            crops: Vec::new(),
        });
    }
    let counts = BTreeMap::from([("leica".to_string(), SplitCounts { train: 4, test: 1 })]);
    let pairs: Vec<(String, String)> = manifest
        .bursts
        .iter()
        .map(|b| (b.id.clone(), b.lens.clone().unwrap()))
        .collect();
    let assignment = split_manifest(&pairs, &counts, 3).unwrap();
    manifest.apply_split(&assignment, 3);
    assert_eq!(manifest.seed, Some(3));
    assert_eq!(manifest.bursts.iter().filter(|b| b.split.is_none()).count(), 1);
    assert_eq!(
        manifest.bursts.iter().filter(|b| b.split == Some(Split::Test)).count(),
        1
    );
}
