//! Deterministic fixtures for the benchmarks.

use segcrowd_core::mask::{serialize_mask, MaskLayer, SegmentationMask};
use segcrowd_core::select::SplitMix64;
use segcrowd_core::vision::{encode_png, GrayImage};

/// Side length of the fundus images the platform was built around.
pub const DFI_SIDE: u32 = 1444;

/// Dark curved vessels on a bright disc, `side` pixels square.
pub fn fundus_like(side: u32) -> GrayImage {
    let n = side as f64;
    GrayImage::from_fn(side, side, |x, y| {
        let (fx, fy) = (x as f64 / n, y as f64 / n);
        let r2 = (fx - 0.5).powi(2) + (fy - 0.5).powi(2);
        if r2 > 0.22 {
            return 0.05;
        }
        let vessel = (fy - 0.5 - 0.2 * (fx * 6.0).sin()).abs() < 0.006 || (fx - 0.35).abs() < 0.004;
        if vessel {
            0.3
        } else {
            0.7 - 0.5 * r2
        }
    })
    .expect("side is at least 1")
}

pub fn fundus_png(side: u32) -> Vec<u8> {
    let img = fundus_like(side);
    encode_png(side, side, 1, &img.to_u8()).expect("valid image")
}

/// A layer made of random horizontal strokes, which is what hand-drawn
/// vessel masks look like to the run-length coder.
pub fn stroke_layer(width: u32, height: u32, seed: u64) -> MaskLayer {
    let mut rng = SplitMix64::new(seed);
    let mut layer = MaskLayer::empty(width, height);
    for _ in 0..(height / 2).max(1) {
        let y = rng.below(height as u64) as u32;
        let x0 = rng.below(width as u64) as u32;
        let len = rng.below(64) as u32 + 1;
        for x in x0..(x0 + len).min(width) {
            layer.set(x, y, true);
        }
    }
    layer
}

pub fn two_class_mask(width: u32, height: u32, seed: u64) -> SegmentationMask {
    let mut m = SegmentationMask::new(width, height).expect("non-empty");
    m.insert_named("arteriole", 0, stroke_layer(width, height, seed)).expect("valid layer");
    m.insert_named("venule", 1, stroke_layer(width, height, seed ^ 0x9e37)).expect("valid layer");
    m
}

pub fn two_class_lseg(width: u32, height: u32, seed: u64) -> Vec<u8> {
    serialize_mask(&two_class_mask(width, height, seed))
}
