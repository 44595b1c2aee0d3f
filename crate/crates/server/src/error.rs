//! The single error shape every endpoint returns.

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};

use segcrowd_core::mask::MaskError;
use segcrowd_core::select::SelectError;
use segcrowd_core::vision::VisionError;
use segcrowd_core::StoreError;

pub const MALFORMED_PAYLOAD: &str = "malformed_payload";
pub const UNAUTHENTICATED: &str = "unauthenticated";
pub const FORBIDDEN_ROLE: &str = "forbidden_role";
pub const UNKNOWN_RESOURCE: &str = "unknown_resource";
pub const ILLEGAL_TRANSITION: &str = "illegal_transition";
pub const DUPLICATE_OPEN_TASK: &str = "duplicate_open_task";
pub const ALREADY_REVIEWED: &str = "already_reviewed";
pub const PAYLOAD_TOO_LARGE: &str = "payload_too_large";
pub const DIMENSION_MISMATCH: &str = "dimension_mismatch";
pub const MALFORMED_RLE: &str = "malformed_rle";
pub const INTERNAL: &str = "internal";

/// `(status, code)` pairs the service can answer with.
pub const ERROR_TABLE: &[(u16, &str)] = &[
    (400, MALFORMED_PAYLOAD),
    (401, UNAUTHENTICATED),
    (403, FORBIDDEN_ROLE),
    (404, UNKNOWN_RESOURCE),
    (409, ILLEGAL_TRANSITION),
    (409, DUPLICATE_OPEN_TASK),
    (409, ALREADY_REVIEWED),
    (413, PAYLOAD_TOO_LARGE),
    (422, DIMENSION_MISMATCH),
    (422, MALFORMED_RLE),
    (500, INTERNAL),
];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub status: u16,
    pub code: String,
    pub message: String,
}

impl ApiError {
    pub fn new(status: u16, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            code: code.to_owned(),
            message: message.into(),
        }
    }

    pub fn malformed(message: impl Into<String>) -> Self {
        Self::new(400, MALFORMED_PAYLOAD, message)
    }

    pub fn unauthenticated(message: impl Into<String>) -> Self {
        Self::new(401, UNAUTHENTICATED, message)
    }

    pub fn forbidden(message: impl Into<String>) -> Self {
        Self::new(403, FORBIDDEN_ROLE, message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(404, UNKNOWN_RESOURCE, message)
    }

    pub fn too_large(message: impl Into<String>) -> Self {
        Self::new(413, PAYLOAD_TOO_LARGE, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(500, INTERNAL, message)
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {}: {}", self.status, self.code, self.message)
    }
}

impl std::error::Error for ApiError {}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let msg = e.to_string();
        match e {
            StoreError::Io(_) | StoreError::StorageFull | StoreError::CorruptBlob(_) | StoreError::CorruptJournal(_) => {
                tracing::error!("{msg}");
                ApiError::internal(msg)
            }
            StoreError::UnknownBlob(_)
            | StoreError::UnknownImage(_)
            | StoreError::UnknownVersion { .. }
            | StoreError::NoVersions(_)
            | StoreError::UnknownAnnotator(_)
            | StoreError::UnknownTask(_) => ApiError::not_found(msg),
            StoreError::AlreadyReviewed { .. } => ApiError::new(409, ALREADY_REVIEWED, msg),
            StoreError::DuplicateOpenTask { .. } => ApiError::new(409, DUPLICATE_OPEN_TASK, msg),
            StoreError::IllegalTransition { .. } | StoreError::IllegalState(_) => {
                ApiError::new(409, ILLEGAL_TRANSITION, msg)
            }
            StoreError::DimensionMismatch(_) => ApiError::new(422, DIMENSION_MISMATCH, msg),
            StoreError::Mask(m) => m.into(),
            StoreError::InvalidImage(_) | StoreError::MissingCorrection | StoreError::InvalidRequest(_) => {
                ApiError::malformed(msg)
            }
            StoreError::Unauthenticated => ApiError::unauthenticated(msg),
            StoreError::Unauthorized(_) => ApiError::forbidden(msg),
        }
    }
}

impl From<MaskError> for ApiError {
    fn from(e: MaskError) -> Self {
        match e {
            MaskError::DimensionMismatch(_) => ApiError::new(422, DIMENSION_MISMATCH, e.to_string()),
            _ => ApiError::new(422, MALFORMED_RLE, e.to_string()),
        }
    }
}

impl From<VisionError> for ApiError {
    fn from(e: VisionError) -> Self {
        ApiError::internal(e.to_string())
    }
}

impl From<SelectError> for ApiError {
    fn from(e: SelectError) -> Self {
        ApiError::malformed(e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use segcrowd_core::workflow::TaskState;

    #[test]
    fn every_mapping_lands_in_the_table() {
        let samples: Vec<ApiError> = vec![
            StoreError::Io("x".into()).into(),
            StoreError::UnknownImage("x".into()).into(),
            StoreError::AlreadyReviewed {
                image_id: "x".into(),
                version_no: 1,
            }
            .into(),
            StoreError::IllegalTransition {
                from: TaskState::Skipped,
                to: TaskState::Submitted,
            }
            .into(),
            StoreError::DimensionMismatch("x".into()).into(),
            StoreError::Mask(MaskError::MalformedRle("x".into())).into(),
            StoreError::Mask(MaskError::MalformedContainer("x".into())).into(),
            StoreError::Unauthorized("x".into()).into(),
            StoreError::MissingCorrection.into(),
            ApiError::too_large("x"),
        ];
        for e in samples {
            assert!(ERROR_TABLE.contains(&(e.status, e.code.as_str())), "{e:?}");
        }
    }
}
