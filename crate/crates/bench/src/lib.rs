//! Deterministic inputs shared by the benchmarks.

use fstack_core::raw::{mosaic, BayerFrame};
use fstack_core::synth::{depth_map, focus_burst, natural_image};
use fstack_core::{AffineWarp, BayerPattern, Image};

/// A `size`×`size` RGGB mosaic of a synthetic scene with a 12-bit range.
pub fn bayer_frame(size: usize) -> BayerFrame {
    mosaic(&natural_image(size, size, 3, 1), BayerPattern::Rggb, 256, 4095, 0).expect("valid mosaic geometry")
}

/// A grayscale template and a copy moved by a small similarity warp.
pub fn ecc_pair(size: usize) -> (Image, Image) {
    let template = natural_image(size, size, 1, 2);
    let c = (size as f64 - 1.0) / 2.0;
    let truth = AffineWarp::similarity(1.5, 1.01, c, c, 3.2, -2.7);
    let moving =
        fstack_core::register::warp_image(&template, &truth.inverse().expect("invertible")).expect("warp succeeds");
    (template, moving)
}

/// An RGB focus burst with depth-dependent blur.
pub fn focus_stack(size: usize, frames: usize) -> Vec<Image> {
    let sharp = natural_image(size, size, 3, 3);
    focus_burst(&sharp, &depth_map(size, size, 3), frames, 4.0)
}

pub fn image_pair(size: usize) -> (Image, Image) {
    let a = natural_image(size, size, 3, 4);
    let b = a.map(|v| (0.9 * v + 0.05).clamp(0.0, 1.0));
    (a, b)
}
