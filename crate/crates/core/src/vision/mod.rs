//! Deterministic image baselines: vesselness pre-segmentation, contrast
//! enhancement and quality grading.

mod clahe;
mod filter;
mod image;
mod provider;
mod quality;
mod vesselness;

pub use clahe::{enhance_contrast, enhance_contrast_rgb, CLIP_LIMIT, TILE_GRID};
pub use filter::{gaussian_kernel, gaussian_smooth, hessian_eigen, reflect101, HessianEigen};
pub use image::{decode_png, encode_png, GrayImage, PngImage, ProbabilityMap};
pub use provider::{
    preseg_provider, quality_provider, FrangiProvider, HeuristicQuality, PresegProvider,
    Presegmentation, QualityProvider, PRESEG_PROVIDERS, QUALITY_PROVIDERS,
};
pub use quality::{quality_score, QualityReport};
pub use vesselness::{presegment, vesselness, Polarity, VesselnessParams, VESSEL_LAYER};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VisionError {
    #[error("sigma must be > 0, got {0}")]
    NonPositiveSigma(f64),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("cannot decode image: {0}")]
    Decode(String),
    #[error("unsupported image format: {0}")]
    Unsupported(String),
}
