//! Contrast-limited adaptive histogram equalization.
//!
//! Intensities are binned on the 256 8-bit levels. Each tile's clipped
//! histogram is turned into a lookup table using the mid-rank of every level,
//! rescaled so that a flat histogram maps every level onto itself. Output
//! pixels blend the four surrounding tile tables bilinearly; the sub-level
//! residual of the input is carried through unchanged.

use super::{GrayImage, PngImage};

pub const TILE_GRID: usize = 8;
/// Clip limit as a multiple of the flat-histogram bin height.
pub const CLIP_LIMIT: f64 = 2.0;
const LEVELS: usize = 256;
const MIN_SIDE: u32 = 16;

fn level(v: f64) -> usize {
    (v * 255.0).round().clamp(0.0, 255.0) as usize
}

fn lookup_table(hist: &[f64; LEVELS], clip: f64) -> [f64; LEVELS] {
    let total: f64 = hist.iter().sum();
    let mut h = *hist;
    let limit = clip * total / LEVELS as f64;
    let excess: f64 = h.iter().map(|&c| (c - limit).max(0.0)).sum();
    let share = excess / LEVELS as f64;
    for c in h.iter_mut() {
        *c = c.min(limit) + share;
    }
    let mut lut = [0.0; LEVELS];
    let mut below = 0.0;
    for (l, &count) in h.iter().enumerate() {
        let mid = (below + count / 2.0) / total;
        lut[l] = ((mid * LEVELS as f64 - 0.5) / 255.0).clamp(0.0, 1.0);
        below += count;
    }
    lut
}

/// Tile start offsets (length `TILE_GRID + 1`) and centers along one axis.
fn tile_axis(n: usize) -> (Vec<usize>, Vec<f64>) {
    let bounds: Vec<usize> = (0..=TILE_GRID).map(|i| i * n / TILE_GRID).collect();
    let centers = bounds.windows(2).map(|b| (b[0] + b[1] - 1) as f64 / 2.0).collect();
    (bounds, centers)
}

/// Lower tile index and blend weight toward the next tile.
fn interp_coord(p: usize, centers: &[f64]) -> (usize, usize, f64) {
    let p = p as f64;
    let last = centers.len() - 1;
    if p <= centers[0] {
        return (0, 0, 0.0);
    }
    if p >= centers[last] {
        return (last, last, 0.0);
    }
    let i = centers.windows(2).position(|c| p < c[1]).expect("p inside center range");
    (i, i + 1, (p - centers[i]) / (centers[i + 1] - centers[i]))
}

/// CLAHE on an 8x8 tile grid with clip limit 2.0. Images with a side shorter
/// than 16 pixels are equalized globally, with the same clip limit.
pub fn enhance_contrast(img: &GrayImage) -> GrayImage {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let values = img.values();
    let levels: Vec<usize> = values.iter().map(|&v| level(v)).collect();

    let out: Vec<f64> = if img.width() < MIN_SIDE || img.height() < MIN_SIDE {
        let mut hist = [0.0; LEVELS];
        for &l in &levels {
            hist[l] += 1.0;
        }
        let lut = lookup_table(&hist, CLIP_LIMIT);
        levels.iter().zip(values).map(|(&l, &v)| lut[l] + (v - l as f64 / 255.0)).collect()
    } else {
        let (xb, xc) = tile_axis(w);
        let (yb, yc) = tile_axis(h);
        let mut luts = Vec::with_capacity(TILE_GRID * TILE_GRID);
        for ty in 0..TILE_GRID {
            for tx in 0..TILE_GRID {
                let mut hist = [0.0; LEVELS];
                for y in yb[ty]..yb[ty + 1] {
                    for &l in &levels[y * w + xb[tx]..y * w + xb[tx + 1]] {
                        hist[l] += 1.0;
                    }
                }
                luts.push(lookup_table(&hist, CLIP_LIMIT));
            }
        }
        let xs: Vec<_> = (0..w).map(|x| interp_coord(x, &xc)).collect();
        let mut out = Vec::with_capacity(w * h);
        for y in 0..h {
            let (y0, y1, fy) = interp_coord(y, &yc);
            for (x, &(x0, x1, fx)) in xs.iter().enumerate() {
                let l = levels[y * w + x];
                let t = |ty: usize, tx: usize| luts[ty * TILE_GRID + tx][l];
                let top = t(y0, x0) * (1.0 - fx) + t(y0, x1) * fx;
                let bottom = t(y1, x0) * (1.0 - fx) + t(y1, x1) * fx;
                let mapped = top * (1.0 - fy) + bottom * fy;
                out.push(mapped + (values[y * w + x] - l as f64 / 255.0));
            }
        }
        out
    };
    GrayImage::from_raw_clamped(img.width(), img.height(), out)
}

/// Enhances the luma of a decoded PNG; RGB channels are rescaled by the luma
/// ratio. Returns 8-bit samples with the input's channel count.
pub fn enhance_contrast_rgb(png: &PngImage) -> Vec<u8> {
    let luma = png.luma();
    let enhanced = enhance_contrast(&luma);
    if png.channels == 1 {
        return enhanced.to_u8();
    }
    let mut out = Vec::with_capacity(png.samples.len());
    for (px, (&before, &after)) in png.samples.chunks_exact(3).zip(luma.values().iter().zip(enhanced.values())) {
        if before <= 0.0 {
            let g = (after * 255.0).round() as u8;
            out.extend_from_slice(&[g, g, g]);
            continue;
        }
        let ratio = after / before;
        for &c in px {
            let v = (f64::from(c) / 255.0 * ratio).clamp(0.0, 1.0);
            out.push((v * 255.0).round() as u8);
        }
    }
    out
}
