//! Multi-scale Frangi vesselness for 2-D images.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::filter::hessian_eigen_raw;
use super::{GrayImage, ProbabilityMap, VisionError};
use crate::mask::{MaskLayer, SegmentationMask};

/// Name of the single layer produced by [`presegment`].
pub const VESSEL_LAYER: &str = "vessel";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Polarity {
    /// Vessels darker than the background, as in fundus photographs.
    DarkOnBright,
    BrightOnDark,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VesselnessParams {
    pub scales: Vec<f64>,
    /// Blobness sensitivity.
    pub beta: f64,
    pub polarity: Polarity,
    pub threshold: f64,
}

impl Default for VesselnessParams {
    fn default() -> Self {
        Self {
            scales: vec![1.0, 2.0, 3.0, 4.0],
            beta: 0.5,
            polarity: Polarity::DarkOnBright,
            threshold: 0.15,
        }
    }
}

impl VesselnessParams {
    pub fn validate(&self) -> Result<(), VisionError> {
        if self.scales.is_empty() {
            return Err(VisionError::InvalidParams("at least one scale is required".into()));
        }
        if let Some(&s) = self.scales.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(VisionError::NonPositiveSigma(s));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(VisionError::InvalidParams(format!("beta must be > 0, got {}", self.beta)));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(VisionError::InvalidParams(format!(
                "threshold must lie in (0,1), got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

fn single_scale(values: &[f64], width: u32, height: u32, sigma: f64, beta: f64) -> Result<Vec<f64>, VisionError> {
    let eig = hessian_eigen_raw(values, width, height, sigma)?;
    let max_s = eig
        .lambda1
        .iter()
        .zip(&eig.lambda2)
        .map(|(a, b)| a.hypot(*b))
        .fold(0.0f64, f64::max);
    // structureness constant: half the largest Hessian norm at this scale
    let c = if max_s > 0.0 { max_s / 2.0 } else { 1.0 };
    let two_beta2 = 2.0 * beta * beta;
    let two_c2 = 2.0 * c * c;
    Ok(eig
        .lambda1
        .iter()
        .zip(&eig.lambda2)
        .map(|(&l1, &l2)| {
            if l2 >= 0.0 {
                return 0.0;
            }
            let rb = l1 / l2;
            let s2 = l1 * l1 + l2 * l2;
            let v = (-rb * rb / two_beta2).exp() * (1.0 - (-s2 / two_c2).exp());
            v.clamp(0.0, 1.0)
        })
        .collect())
}

/// Pixelwise maximum of the single-scale responses.
pub fn vesselness(img: &GrayImage, params: &VesselnessParams) -> Result<ProbabilityMap, VisionError> {
    params.validate()?;
    let work = match params.polarity {
        Polarity::DarkOnBright => img.inverted(),
        Polarity::BrightOnDark => img.clone(),
    };
    let per_scale: Vec<Vec<f64>> = params
        .scales
        .par_iter()
        .map(|&sigma| single_scale(work.values(), work.width(), work.height(), sigma, params.beta))
        .collect::<Result<_, _>>()?;
    let mut best = vec![0.0f64; work.values().len()];
    for response in &per_scale {
        for (b, &r) in best.iter_mut().zip(response) {
            *b = b.max(r);
        }
    }
    ProbabilityMap::new(img.width(), img.height(), best)
}

/// Thresholds a probability map into a single [`VESSEL_LAYER`] layer.
pub(crate) fn threshold_map(map: &ProbabilityMap, threshold: f64) -> SegmentationMask {
    let bits = map.values().iter().map(|&p| p >= threshold).collect();
    let layer = MaskLayer::from_bits(map.width(), map.height(), bits).expect("shape matches map");
    let mut mask = SegmentationMask::new(map.width(), map.height()).expect("map is at least 1x1");
    mask.insert_named(VESSEL_LAYER, 0, layer).expect("valid layer name");
    mask
}

pub fn presegment(img: &GrayImage, params: &VesselnessParams) -> Result<SegmentationMask, VisionError> {
    let map = vesselness(img, params)?;
    Ok(threshold_map(&map, params.threshold))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_validation() {
        assert!(VesselnessParams::default().validate().is_ok());
        let bad = |f: fn(&mut VesselnessParams)| {
            let mut p = VesselnessParams::default();
            f(&mut p);
            p.validate().is_err()
        };
        assert!(bad(|p| p.scales.clear()));
        assert!(bad(|p| p.scales.push(0.0)));
        assert!(bad(|p| p.beta = 0.0));
        assert!(bad(|p| p.threshold = 1.0));
        assert!(bad(|p| p.threshold = 0.0));
    }

    #[test]
    fn flat_image_has_no_response() {
        let img = GrayImage::constant(20, 17, 0.6).unwrap();
        let map = vesselness(&img, &VesselnessParams::default()).unwrap();
        assert!(map.values().iter().all(|&v| v == 0.0));
        let mask = presegment(&img, &VesselnessParams::default()).unwrap();
        assert_eq!(mask.layer_names(), [VESSEL_LAYER]);
        assert_eq!(mask.layer(VESSEL_LAYER).unwrap().area(), 0);
    }

    #[test]
    fn polarity_selects_dark_or_bright_lines() {
        let dark = GrayImage::from_fn(32, 32, |_, y| if (15..17).contains(&y) { 0.1 } else { 0.9 }).unwrap();
        let p = VesselnessParams::default();
        let on_dark = vesselness(&dark, &p).unwrap().get(10, 15);
        let flipped = VesselnessParams {
            polarity: Polarity::BrightOnDark,
            ..p
        };
        let on_bright = vesselness(&dark, &flipped).unwrap().get(10, 15);
        assert!(on_dark > 0.5, "{on_dark}");
        assert_eq!(on_bright, 0.0);
    }
}
