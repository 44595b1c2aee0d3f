//! Pluggable pre-segmentation and quality providers, selectable by name.

use super::vesselness::threshold_map;
use super::{decode_png, quality_score, vesselness, ProbabilityMap, QualityReport, VesselnessParams, VisionError};
use crate::mask::{LabelClass, SegmentationMask};

pub struct Presegmentation {
    pub mask: SegmentationMask,
    pub probability: ProbabilityMap,
}

pub trait PresegProvider: Send + Sync {
    fn name(&self) -> &str;
    /// `png` is the enrolled image file; `classes` is the project palette.
    fn presegment(&self, png: &[u8], classes: &[LabelClass]) -> Result<Presegmentation, VisionError>;
}

pub trait QualityProvider: Send + Sync {
    fn name(&self) -> &str;
    fn grade(&self, png: &[u8]) -> Result<QualityReport, VisionError>;
}

/// Multi-scale vesselness thresholded into one `vessel` layer. The class
/// palette is ignored: the baseline does not separate arteries from veins.
#[derive(Default)]
pub struct FrangiProvider {
    pub params: VesselnessParams,
}

impl PresegProvider for FrangiProvider {
    fn name(&self) -> &str {
        "frangi-v1"
    }

    fn presegment(&self, png: &[u8], _classes: &[LabelClass]) -> Result<Presegmentation, VisionError> {
        let img = decode_png(png)?.luma();
        let probability = vesselness(&img, &self.params)?;
        let mask = threshold_map(&probability, self.params.threshold);
        Ok(Presegmentation { mask, probability })
    }
}

#[derive(Default)]
pub struct HeuristicQuality;

impl QualityProvider for HeuristicQuality {
    fn name(&self) -> &str {
        "heuristic-q1"
    }

    fn grade(&self, png: &[u8]) -> Result<QualityReport, VisionError> {
        Ok(quality_score(&decode_png(png)?.luma()))
    }
}

pub const PRESEG_PROVIDERS: &[&str] = &["frangi-v1"];
pub const QUALITY_PROVIDERS: &[&str] = &["heuristic-q1"];

pub fn preseg_provider(name: &str) -> Option<Box<dyn PresegProvider>> {
    match name {
        "frangi-v1" => Some(Box::new(FrangiProvider::default())),
        _ => None,
    }
}

pub fn quality_provider(name: &str) -> Option<Box<dyn QualityProvider>> {
    match name {
        "heuristic-q1" => Some(Box::new(HeuristicQuality)),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vision::encode_png;

    #[test]
    fn registry_knows_builtin_names() {
        assert_eq!(preseg_provider("frangi-v1").unwrap().name(), "frangi-v1");
        assert_eq!(quality_provider("heuristic-q1").unwrap().name(), "heuristic-q1");
        assert!(preseg_provider("unet").is_none());
        assert!(quality_provider("fundusq").is_none());
    }

    #[test]
    fn providers_work_from_png_bytes() {
        let samples: Vec<u8> = (0..24 * 24).map(|i| if (i / 24) % 8 == 3 { 40 } else { 200 }).collect();
        let png = encode_png(24, 24, 1, &samples).unwrap();
        let pre = FrangiProvider::default().presegment(&png, &[]).unwrap();
        assert_eq!((pre.mask.width(), pre.mask.height()), (24, 24));
        assert!(pre.mask.layer("vessel").unwrap().area() > 0);
        let q = HeuristicQuality.grade(&png).unwrap();
        assert!((1.0..=10.0).contains(&q.grade));
        assert!(HeuristicQuality.grade(b"nope").is_err());
    }
}
