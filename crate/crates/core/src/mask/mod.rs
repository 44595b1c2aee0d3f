//! Layered segmentation masks and everything that reads or writes them.

mod container;
mod image;
mod layer;
mod metrics;
mod raster;
mod rle;

pub use container::{deserialize_mask, serialize_mask, FORMAT_VERSION, MAGIC, MAX_MASK_PIXELS};
pub use image::{ImageRecord, ImageStatus};
pub use layer::{LabelClass, MaskLayer, SegmentationMask};
pub use metrics::{compare_masks, dice, iou, AgreementReport, ClassAgreement};
pub use raster::rasterize_stroke;
pub use rle::{decode_rle, encode_rle, runs};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MaskError {
    #[error("malformed run-length payload: {0}")]
    MalformedRle(String),
    #[error("malformed .lseg container: {0}")]
    MalformedContainer(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("layer sets differ: {0}")]
    LayerSetMismatch(String),
    #[error("invalid label class name {0:?}")]
    InvalidClassName(String),
    #[error("stroke has no points")]
    EmptyPolyline,
    #[error("brush radius must be a finite value >= 0, got {0}")]
    InvalidRadius(f64),
}
