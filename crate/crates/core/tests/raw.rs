use std::fs;
use std::path::Path;

use fstack_core::metrics::psnr;
use fstack_core::raw::{demosaic, ingest_frame, load_burst_dir, mosaic, pack_planes, write_frame, Sidecar};
use fstack_core::synth::natural_image;
use fstack_core::{BayerPattern, Error};

fn sidecar(width: usize, height: usize, black: u16, white: u16) -> Sidecar {
    Sidecar {
        width,
        height,
        pattern: BayerPattern::Rggb,
        black_level: black,
        white_level: white,
        frame_index: 0,
        iso: Some(200),
        lens: Some("test".into()),
    }
}

/// Known 8×8 payload written byte by byte as a big-endian 16-bit PGM.
fn write_fixture(path: &Path) -> Vec<u16> {
    let samples: Vec<u16> = (0..64u16).map(|i| 512 + i * 57).collect();
    let mut bytes = b"P5\n8 8\n65535\n".to_vec();
    for s in &samples {
        bytes.extend_from_slice(&s.to_be_bytes());
    }
    fs::write(path, bytes).unwrap();
    samples
}

#[test]
fn fixture_mosaic_is_ingested_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.pgm");
    let samples = write_fixture(&path);
    let frame = ingest_frame(&path, &sidecar(8, 8, 512, 4095)).unwrap();
    assert_eq!(frame.samples(), samples.as_slice());
    assert_eq!((frame.width(), frame.height()), (8, 8));
    assert_eq!(frame.pattern(), BayerPattern::Rggb);
    assert_eq!((frame.black_level(), frame.white_level()), (512, 4095));
}

#[test]
fn ingest_rejects_invalid_sidecars() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.pgm");
    write_fixture(&path);
    assert!(matches!(
        ingest_frame(&path, &sidecar(127, 8, 512, 4095)),
        Err(Error::OddDimension { .. })
    ));
    assert!(matches!(
        ingest_frame(&path, &sidecar(8, 8, 4095, 512)),
        Err(Error::InvalidLevels { .. })
    ));
    assert!(matches!(
        ingest_frame(&path, &sidecar(8, 6, 512, 4095)),
        Err(Error::DimensionMismatch { .. })
    ));
    assert!(ingest_frame(&dir.path().join("missing.pgm"), &sidecar(8, 8, 512, 4095)).is_err());
}

#[test]
fn png_and_pgm_containers_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let rgb = natural_image(32, 24, 3, 1);
    let frame = mosaic(&rgb, BayerPattern::Gbrg, 64, 1023, 3).unwrap();
    for ext in ["pgm", "png"] {
        let path = dir.path().join(format!("frame.{ext}"));
        write_frame(&path, &frame, Some(400), Some("macro")).unwrap();
        let side = Sidecar::read(&path.with_extension("json")).unwrap();
        assert_eq!(side.lens.as_deref(), Some("macro"));
        assert_eq!(side.iso, Some(400));
        let back = ingest_frame(&path, &side).unwrap();
        assert_eq!(back.samples(), frame.samples());
        assert_eq!(back.frame_index(), 3);
        assert_eq!(back.pattern(), BayerPattern::Gbrg);
        fs::remove_file(&path).unwrap();
    }
}

#[test]
fn burst_directories_load_in_frame_order() {
    let dir = tempfile::tempdir().unwrap();
    let rgb = natural_image(16, 16, 3, 2);
    for (name, index) in [("c", 0), ("a", 2), ("b", 1)] {
        let frame = mosaic(&rgb, BayerPattern::Rggb, 0, 4095, index).unwrap();
        write_frame(&dir.path().join(format!("{name}.png")), &frame, None, Some("leica")).unwrap();
    }
    fs::write(dir.path().join("warps.json"), "{}").unwrap();
    let burst = load_burst_dir(dir.path()).unwrap();
    let order: Vec<usize> = burst.frames.iter().map(|f| f.frame_index()).collect();
    assert_eq!(order, vec![0, 1, 2]);
    assert_eq!(burst.lens.as_deref(), Some("leica"));
    assert!(load_burst_dir(&dir.path().join("nope")).is_err());
}

#[test]
fn demosaic_recovers_natural_images() {
    // Reference run: 33.50 dB to 34.76 dB over these seeds and patterns.
    for seed in 0..3 {
        let rgb = natural_image(128, 128, 3, seed);
        for pattern in BayerPattern::ALL {
            let frame = mosaic(&rgb, pattern, 0, 65535, 0).unwrap();
            let out = demosaic(&frame);
            let value = psnr(&out, &rgb, 1.0, 2).unwrap();
            eprintln!("seed {seed} {pattern:?}: {value:.2} dB");
            assert!(value > 33.0, "{value}");
            let planes = pack_planes(&frame);
            assert_eq!((planes.width(), planes.height()), (64, 64));
        }
    }
}
