//! Append-only, content-addressed persistence.
//!
//! Pixels live in a content-addressed blob directory; every metadata change
//! is one line in `journal.jsonl`. Writers are serialized through the journal
//! lock and a change is visible only after its record has been written, so
//! version numbers stay dense under concurrent appenders while readers see a
//! consistent prefix.

mod blob;
mod journal;
mod state;

use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use blob::{BlobRef, BlobStore};
pub use journal::{replay_journal, Durability, JournalRecord};
pub use state::{Event, ReviewMark, State, TaskEvent};

use journal::JournalWriter;

use crate::mask::{deserialize_mask, ImageRecord, ImageStatus, MaskError, SegmentationMask};
use crate::vision::decode_png;
use crate::workflow::TaskState;

pub const JOURNAL_FILE: &str = "journal.jsonl";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o failure: {0}")]
    Io(String),
    #[error("storage full")]
    StorageFull,
    #[error("unknown blob {0}")]
    UnknownBlob(String),
    #[error("blob {0} failed digest verification")]
    CorruptBlob(String),
    #[error("unknown image {0}")]
    UnknownImage(String),
    #[error("image {image_id} has no version {version_no}")]
    UnknownVersion { image_id: String, version_no: u32 },
    #[error("image {0} has no versions")]
    NoVersions(String),
    #[error("version {image_id}/{version_no} was already reviewed")]
    AlreadyReviewed { image_id: String, version_no: u32 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("corrupt journal: {0}")]
    CorruptJournal(String),
    #[error("unauthenticated")]
    Unauthenticated,
    #[error("forbidden: {0}")]
    Unauthorized(String),
    #[error("unknown annotator {0}")]
    UnknownAnnotator(String),
    #[error("unknown task {0}")]
    UnknownTask(String),
    #[error("annotator {annotator_id} already has an open task on image {image_id}")]
    DuplicateOpenTask { image_id: String, annotator_id: String },
    #[error("illegal transition {from:?} -> {to:?}")]
    IllegalTransition { from: TaskState, to: TaskState },
    #[error("illegal operation: {0}")]
    IllegalState(String),
    #[error("a corrected verdict requires a replacement mask")]
    MissingCorrection,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl From<std::io::Error> for StoreError {
    fn from(e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::StorageFull {
            StoreError::StorageFull
        } else {
            StoreError::Io(e.to_string())
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VersionKind {
    Manual,
    Presegmentation,
    Correction,
    Restore,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewStatus {
    Unreviewed,
    Approved,
    Corrected,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Approved,
    Corrected,
}

impl From<Verdict> for ReviewStatus {
    fn from(v: Verdict) -> Self {
        match v {
            Verdict::Approved => ReviewStatus::Approved,
            Verdict::Corrected => ReviewStatus::Corrected,
        }
    }
}

/// One immutable entry of an image's segmentation history. Only the three
/// review fields ever change, and only once.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VersionEntry {
    pub image_id: String,
    pub version_no: u32,
    pub blob: BlobRef,
    pub annotator_id: String,
    pub created_at: DateTime<Utc>,
    pub kind: VersionKind,
    pub restored_from: Option<u32>,
    pub review: ReviewStatus,
    pub reviewer_id: Option<String>,
    pub reviewed_at: Option<DateTime<Utc>>,
}

pub struct Store {
    root: PathBuf,
    blobs: BlobStore,
    state: RwLock<State>,
    journal: Mutex<JournalWriter>,
}

impl Store {
    /// Opens (or initializes) a data root, replaying its journal.
    pub fn open(root: impl AsRef<Path>, durability: Durability) -> Result<Self, StoreError> {
        let root = root.as_ref().to_owned();
        std::fs::create_dir_all(&root)?;
        let blobs = BlobStore::open(&root)?;
        let path = root.join(JOURNAL_FILE);
        let replayed = journal::replay(&path)?;
        let writer = JournalWriter::open(&path, replayed.valid_len, replayed.last_seq, durability)?;
        Ok(Self {
            root,
            blobs,
            state: RwLock::new(replayed.state),
            journal: Mutex::new(writer),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn journal_path(&self) -> PathBuf {
        self.root.join(JOURNAL_FILE)
    }

    pub fn blobs(&self) -> &BlobStore {
        &self.blobs
    }

    pub fn last_seq(&self) -> u64 {
        self.journal.lock().last_seq
    }

    /// Runs `f` against a consistent view of the state.
    pub fn read<R>(&self, f: impl FnOnce(&State) -> R) -> R {
        f(&self.state.read())
    }

    pub fn snapshot(&self) -> State {
        self.state.read().clone()
    }

    /// State together with the sequence number of the last record it
    /// includes.
    pub fn snapshot_with_seq(&self) -> (State, u64) {
        let journal = self.journal.lock();
        let state = self.state.read().clone();
        (state, journal.last_seq)
    }

    /// The single write path. `build` inspects the current state and decides
    /// which event (if any) to journal; the event is durable before it
    /// becomes visible to readers.
    pub(crate) fn commit<T>(
        &self,
        build: impl FnOnce(&State, DateTime<Utc>) -> Result<(Option<Event>, T), StoreError>,
    ) -> Result<T, StoreError> {
        let mut journal = self.journal.lock();
        let now = Utc::now();
        let (event, out) = {
            let state = self.state.read();
            let (event, out) = build(&state, now)?;
            if let Some(e) = &event {
                state.validate(e).map_err(StoreError::IllegalState)?;
            }
            (event, out)
        };
        if let Some(event) = event {
            journal.append(now, &event)?;
            self.state.write().mutate(&event);
        }
        Ok(out)
    }

    pub fn put_blob(&self, bytes: &[u8]) -> Result<BlobRef, StoreError> {
        self.blobs.put(bytes)
    }

    pub fn get_blob(&self, blob: &BlobRef) -> Result<Vec<u8>, StoreError> {
        self.blobs.get(blob)
    }

    pub fn image(&self, image_id: &str) -> Result<ImageRecord, StoreError> {
        self.read(|s| s.images.get(image_id).cloned())
            .ok_or_else(|| StoreError::UnknownImage(image_id.to_owned()))
    }

    pub fn images(&self) -> Vec<ImageRecord> {
        self.read(|s| s.images.values().cloned().collect())
    }

    pub fn image_bytes(&self, image_id: &str) -> Result<Vec<u8>, StoreError> {
        self.image(image_id)?;
        self.blobs.get_digest(image_id)
    }

    /// Stores a PNG and journals its record. Identical bytes return the
    /// existing record; the flag tells whether a new record was created.
    pub fn enroll_image(&self, png: &[u8], source_name: &str) -> Result<(ImageRecord, bool), StoreError> {
        let decoded = decode_png(png).map_err(|e| StoreError::InvalidImage(e.to_string()))?;
        let blob = self.blobs.put(png)?;
        self.commit(|state, now| {
            if let Some(existing) = state.images.get(&blob.digest) {
                return Ok((None, (existing.clone(), false)));
            }
            let record = ImageRecord {
                image_id: blob.digest.clone(),
                width: decoded.width,
                height: decoded.height,
                channels: decoded.channels,
                bit_depth: 8,
                source_name: source_name.to_owned(),
                enrolled_at: now,
                status: ImageStatus::Pending,
            };
            Ok((Some(Event::ImageEnrolled(record.clone())), (record, true)))
        })
    }

    /// Decodes `bytes` as `.lseg` and checks it against the image raster.
    pub fn check_mask(&self, image: &ImageRecord, bytes: &[u8]) -> Result<SegmentationMask, StoreError> {
        let mask = deserialize_mask(bytes)?;
        if (mask.width(), mask.height()) != (image.width, image.height) {
            return Err(StoreError::DimensionMismatch(format!(
                "mask is {}x{}, image {} is {}x{}",
                mask.width(),
                mask.height(),
                image.image_id,
                image.width,
                image.height
            )));
        }
        Ok(mask)
    }

    pub fn load_mask(&self, entry: &VersionEntry) -> Result<SegmentationMask, StoreError> {
        Ok(deserialize_mask(&self.blobs.get(&entry.blob)?)?)
    }

    pub(crate) fn new_version(
        state: &State,
        now: DateTime<Utc>,
        image_id: &str,
        blob: &BlobRef,
        annotator_id: &str,
        kind: VersionKind,
        restored_from: Option<u32>,
    ) -> VersionEntry {
        VersionEntry {
            image_id: image_id.to_owned(),
            version_no: state.history(image_id).len() as u32 + 1,
            blob: blob.clone(),
            annotator_id: annotator_id.to_owned(),
            created_at: now,
            kind,
            restored_from,
            review: ReviewStatus::Unreviewed,
            reviewer_id: None,
            reviewed_at: None,
        }
    }

    pub fn append_version(
        &self,
        image_id: &str,
        blob: &BlobRef,
        annotator_id: &str,
        kind: VersionKind,
        restored_from: Option<u32>,
    ) -> Result<VersionEntry, StoreError> {
        let image = self.image(image_id)?;
        let bytes = self.blobs.get(blob)?;
        self.check_mask(&image, &bytes)?;
        self.commit(|state, now| {
            if let Some(from) = restored_from {
                if state.version(image_id, from).is_none() {
                    return Err(StoreError::UnknownVersion {
                        image_id: image_id.to_owned(),
                        version_no: from,
                    });
                }
            }
            let entry = Self::new_version(state, now, image_id, blob, annotator_id, kind, restored_from);
            Ok((Some(Event::VersionAppended(entry.clone())), entry))
        })
    }

    pub fn history(&self, image_id: &str) -> Result<Vec<VersionEntry>, StoreError> {
        self.read(|s| {
            if !s.images.contains_key(image_id) {
                return Err(StoreError::UnknownImage(image_id.to_owned()));
            }
            Ok(s.history(image_id).to_vec())
        })
    }

    pub fn version(&self, image_id: &str, version_no: u32) -> Result<VersionEntry, StoreError> {
        self.read(|s| {
            if !s.images.contains_key(image_id) {
                return Err(StoreError::UnknownImage(image_id.to_owned()));
            }
            s.version(image_id, version_no).cloned().ok_or_else(|| StoreError::UnknownVersion {
                image_id: image_id.to_owned(),
                version_no,
            })
        })
    }

    pub fn head(&self, image_id: &str) -> Result<VersionEntry, StoreError> {
        self.history(image_id)?
            .pop()
            .ok_or_else(|| StoreError::NoVersions(image_id.to_owned()))
    }

    /// Copies an old version forward as a new head; nothing is rewritten.
    pub fn restore(&self, image_id: &str, version_no: u32, actor_id: &str) -> Result<VersionEntry, StoreError> {
        self.commit(|state, now| {
            if !state.images.contains_key(image_id) {
                return Err(StoreError::UnknownImage(image_id.to_owned()));
            }
            let source = state.version(image_id, version_no).ok_or_else(|| StoreError::UnknownVersion {
                image_id: image_id.to_owned(),
                version_no,
            })?;
            let entry = Self::new_version(
                state,
                now,
                image_id,
                &source.blob,
                actor_id,
                VersionKind::Restore,
                Some(version_no),
            );
            Ok((Some(Event::VersionAppended(entry.clone())), entry))
        })
    }

    pub(crate) fn review_mark(
        state: &State,
        now: DateTime<Utc>,
        image_id: &str,
        version_no: u32,
        reviewer_id: &str,
        verdict: Verdict,
    ) -> Result<ReviewMark, StoreError> {
        if !state.images.contains_key(image_id) {
            return Err(StoreError::UnknownImage(image_id.to_owned()));
        }
        let entry = state.version(image_id, version_no).ok_or_else(|| StoreError::UnknownVersion {
            image_id: image_id.to_owned(),
            version_no,
        })?;
        if entry.review != ReviewStatus::Unreviewed {
            return Err(StoreError::AlreadyReviewed {
                image_id: image_id.to_owned(),
                version_no,
            });
        }
        Ok(ReviewMark {
            image_id: image_id.to_owned(),
            version_no,
            review: verdict.into(),
            reviewer_id: reviewer_id.to_owned(),
            reviewed_at: now,
        })
    }

    /// Records a review verdict on an existing version. Role checks belong
    /// to the caller.
    pub fn mark_review(
        &self,
        image_id: &str,
        version_no: u32,
        reviewer_id: &str,
        verdict: Verdict,
    ) -> Result<VersionEntry, StoreError> {
        self.commit(|state, now| {
            let mark = Self::review_mark(state, now, image_id, version_no, reviewer_id, verdict)?;
            let mut entry = state.version(image_id, version_no).cloned().expect("checked in review_mark");
            entry.review = mark.review;
            entry.reviewer_id = Some(mark.reviewer_id.clone());
            entry.reviewed_at = Some(mark.reviewed_at);
            Ok((Some(Event::ReviewMarked(mark)), entry))
        })
    }

    /// Rewrites the journal as a single snapshot record. Writers are blocked
    /// for the duration.
    pub fn compact_journal(&self) -> Result<(), StoreError> {
        let mut journal = self.journal.lock();
        let state = self.state.read();
        journal.compact(Utc::now(), &state)
    }
}
