use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageStatus {
    Pending,
    Assigned,
    Segmented,
    Reviewed,
    Skipped,
}

/// An enrolled image. `image_id` is the SHA-256 of the stored PNG bytes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub channels: u8,
    pub bit_depth: u8,
    pub source_name: String,
    pub enrolled_at: DateTime<Utc>,
    pub status: ImageStatus,
}
