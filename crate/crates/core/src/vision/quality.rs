//! Heuristic image-quality grade on a 1-10 scale.

use serde::{Deserialize, Serialize};

use super::filter::reflect101;
use super::GrayImage;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub grade: f64,
    pub sharpness: f64,
    pub contrast: f64,
    pub exposure: f64,
}

impl QualityReport {
    pub fn from_components(sharpness: f64, contrast: f64, exposure: f64) -> Self {
        let grade = (1.0 + 9.0 * (0.4 * sharpness + 0.4 * contrast + 0.2 * exposure)).clamp(1.0, 10.0);
        Self {
            grade,
            sharpness,
            contrast,
            exposure,
        }
    }
}

const EXPOSURE_BINS: usize = 32;

/// Variance of the 4-neighbour Laplacian of the image on a 0-255 scale.
pub(crate) fn laplacian_variance(img: &GrayImage) -> f64 {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let v = img.values();
    let at = |x: isize, y: isize| 255.0 * v[reflect101(y, h) * w + reflect101(x, w)];
    let mut lap = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let c = at(x, y);
            // differences first so flat regions give exactly zero
            lap.push((at(x - 1, y) - c) + (at(x + 1, y) - c) + (at(x, y - 1) - c) + (at(x, y + 1) - c));
        }
    }
    let n = lap.len() as f64;
    let mean = lap.iter().sum::<f64>() / n;
    lap.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / n
}

pub fn quality_score(img: &GrayImage) -> QualityReport {
    let sharpness = (laplacian_variance(img) / 100.0).min(1.0);
    let contrast = (img.variance().sqrt() / 0.5).min(1.0);

    let n = img.values().len();
    let mut bins = [0usize; EXPOSURE_BINS];
    for &v in img.values() {
        bins[((v * EXPOSURE_BINS as f64) as usize).min(EXPOSURE_BINS - 1)] += 1;
    }
    // a bin counts when it holds at least 0.1% of the pixels
    let occupied = bins.iter().filter(|&&c| c * 1000 >= n).count();
    let exposure = occupied as f64 / EXPOSURE_BINS as f64;

    QualityReport::from_components(sharpness, contrast, exposure)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_grade() {
        let r = quality_score(&GrayImage::constant(40, 30, 0.3).unwrap());
        assert_eq!(r.sharpness, 0.0);
        assert_eq!(r.contrast, 0.0);
        assert_eq!(r.exposure, 1.0 / 32.0);
        assert!((r.grade - (1.0 + 9.0 * (0.2 / 32.0))).abs() < 1e-12);
        assert!((r.grade - 1.05625).abs() < 1e-12);
    }

    #[test]
    fn checkerboard_saturates_every_component_but_exposure() {
        let img = GrayImage::from_fn(32, 32, |x, y| ((x + y) % 2) as f64).unwrap();
        let r = quality_score(&img);
        assert_eq!(r.sharpness, 1.0);
        assert_eq!(r.contrast, 1.0);
        assert_eq!(r.exposure, 2.0 / 32.0);
        assert!((r.grade - (1.0 + 9.0 * (0.8 + 0.2 * 2.0 / 32.0))).abs() < 1e-12);
    }

    #[test]
    fn grade_clamps() {
        assert_eq!(QualityReport::from_components(1.0, 1.0, 1.0).grade, 10.0);
        assert_eq!(QualityReport::from_components(0.0, 0.0, 0.0).grade, 1.0);
    }
}
