//! Core of a self-hosted platform for crowd-sourcing multi-class image
//! segmentations.
//!
//! * [`mask`]: layered binary masks, the `.lseg` container, brush geometry and
//!   agreement metrics.
//! * [`vision`]: deterministic pre-segmentation, contrast enhancement and
//!   quality grading behind provider traits.
//! * [`store`]: content-addressed blobs plus an append-only JSON-lines journal
//!   holding images, versions, annotators and tasks.
//! * [`workflow`]: roles and the per-image task state machine.
//! * [`select`]: active-learning batch selection.
//! * [`export`]: dataset archives with a full audit manifest.

pub mod export;
pub mod mask;
pub mod select;
pub mod store;
pub mod vision;
pub mod workflow;

pub use mask::{
    AgreementReport, ClassAgreement, ImageRecord, ImageStatus, LabelClass, MaskError, MaskLayer,
    SegmentationMask,
};
pub use select::{SelectError, StrategySpec};
pub use store::{BlobRef, Durability, Store, StoreError, VersionEntry, VersionKind};
pub use vision::{GrayImage, ProbabilityMap, QualityReport, VesselnessParams, VisionError};
pub use workflow::{Annotator, Role, Task, TaskState};

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}

/// True for a 64-character lowercase hex string.
pub fn is_hex_digest(s: &str) -> bool {
    s.len() == 64 && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}
