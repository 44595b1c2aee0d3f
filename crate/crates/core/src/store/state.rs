//! In-memory state rebuilt from the journal, and the events that change it.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{ReviewStatus, VersionEntry};
use crate::mask::{ImageRecord, ImageStatus};
use crate::workflow::{Annotator, Task};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub images: BTreeMap<String, ImageRecord>,
    pub versions: BTreeMap<String, Vec<VersionEntry>>,
    pub annotators: BTreeMap<String, Annotator>,
    pub tasks: BTreeMap<String, Task>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReviewMark {
    pub image_id: String,
    pub version_no: u32,
    pub review: ReviewStatus,
    pub reviewer_id: String,
    pub reviewed_at: DateTime<Utc>,
}

/// Everything one task operation changes, journaled as a single record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskEvent {
    pub task: Task,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_status: Option<ImageStatus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub review: Option<ReviewMark>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<VersionEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum Event {
    ImageEnrolled(ImageRecord),
    VersionAppended(VersionEntry),
    ReviewMarked(ReviewMark),
    AnnotatorRegistered(Annotator),
    AnnotatorUpdated(Annotator),
    TaskEvent(Box<TaskEvent>),
    Snapshot(Box<State>),
}

impl Event {
    pub fn type_name(&self) -> &'static str {
        match self {
            Event::ImageEnrolled(_) => "image_enrolled",
            Event::VersionAppended(_) => "version_appended",
            Event::ReviewMarked(_) => "review_marked",
            Event::AnnotatorRegistered(_) => "annotator_registered",
            Event::AnnotatorUpdated(_) => "annotator_updated",
            Event::TaskEvent(_) => "task_event",
            Event::Snapshot(_) => "snapshot",
        }
    }
}

impl State {
    pub fn history(&self, image_id: &str) -> &[VersionEntry] {
        self.versions.get(image_id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn version(&self, image_id: &str, version_no: u32) -> Option<&VersionEntry> {
        version_no
            .checked_sub(1)
            .and_then(|i| self.history(image_id).get(i as usize))
    }

    fn check_version(&self, v: &VersionEntry, pending: u32) -> Result<(), String> {
        if !self.images.contains_key(&v.image_id) {
            return Err(format!("version for unknown image {}", v.image_id));
        }
        let expected = self.history(&v.image_id).len() as u32 + 1 + pending;
        if v.version_no != expected {
            return Err(format!(
                "version {} of {} breaks density (expected {expected})",
                v.version_no, v.image_id
            ));
        }
        if let Some(from) = v.restored_from {
            if from >= v.version_no {
                return Err(format!("restore source {from} is not older than {}", v.version_no));
            }
        }
        Ok(())
    }

    fn check_review(&self, m: &ReviewMark) -> Result<(), String> {
        match self.version(&m.image_id, m.version_no) {
            None => Err(format!("review of unknown version {}/{}", m.image_id, m.version_no)),
            Some(v) if v.review != ReviewStatus::Unreviewed => {
                Err(format!("version {}/{} reviewed twice", m.image_id, m.version_no))
            }
            Some(_) if m.review == ReviewStatus::Unreviewed => Err("empty review verdict".into()),
            Some(_) => Ok(()),
        }
    }

    fn check_task(&self, task: &Task) -> Result<(), String> {
        if !self.images.contains_key(&task.image_id) {
            return Err(format!("task {} on unknown image", task.task_id));
        }
        if !self.annotators.contains_key(&task.annotator_id) {
            return Err(format!("task {} for unknown annotator", task.task_id));
        }
        if let Some(prev) = self.tasks.get(&task.task_id) {
            if !task.state_path.starts_with(&prev.state_path) {
                return Err(format!("task {} rewrote its state path", task.task_id));
            }
        }
        if !task.path_is_legal() {
            return Err(format!("task {} has an illegal state path", task.task_id));
        }
        Ok(())
    }

    /// Checks that `event` can be applied to the current state.
    pub fn validate(&self, event: &Event) -> Result<(), String> {
        match event {
            Event::ImageEnrolled(rec) if self.images.contains_key(&rec.image_id) => {
                Err(format!("image {} enrolled twice", rec.image_id))
            }
            Event::ImageEnrolled(_) | Event::Snapshot(_) => Ok(()),
            Event::VersionAppended(v) => self.check_version(v, 0),
            Event::ReviewMarked(m) => self.check_review(m),
            Event::AnnotatorRegistered(a) if self.annotators.contains_key(&a.annotator_id) => {
                Err(format!("annotator {} registered twice", a.annotator_id))
            }
            Event::AnnotatorRegistered(_) => Ok(()),
            Event::AnnotatorUpdated(a) if !self.annotators.contains_key(&a.annotator_id) => {
                Err(format!("update of unknown annotator {}", a.annotator_id))
            }
            Event::AnnotatorUpdated(_) => Ok(()),
            Event::TaskEvent(te) => {
                self.check_task(&te.task)?;
                if let Some(m) = &te.review {
                    self.check_review(m)?;
                }
                if let Some(v) = &te.version {
                    self.check_version(v, 0)?;
                }
                Ok(())
            }
        }
    }

    /// Validates `event`, then applies it. On error the state is untouched.
    pub fn apply(&mut self, event: &Event) -> Result<(), String> {
        self.validate(event)?;
        self.mutate(event);
        Ok(())
    }

    pub(crate) fn mutate(&mut self, event: &Event) {
        match event {
            Event::ImageEnrolled(rec) => {
                self.images.insert(rec.image_id.clone(), rec.clone());
            }
            Event::VersionAppended(v) => {
                self.versions.entry(v.image_id.clone()).or_default().push(v.clone());
            }
            Event::ReviewMarked(m) => self.set_review(m),
            Event::AnnotatorRegistered(a) | Event::AnnotatorUpdated(a) => {
                self.annotators.insert(a.annotator_id.clone(), a.clone());
            }
            Event::TaskEvent(te) => {
                if let Some(m) = &te.review {
                    self.set_review(m);
                }
                if let Some(v) = &te.version {
                    self.versions.entry(v.image_id.clone()).or_default().push(v.clone());
                }
                if let Some(status) = te.image_status {
                    if let Some(img) = self.images.get_mut(&te.task.image_id) {
                        img.status = status;
                    }
                }
                self.tasks.insert(te.task.task_id.clone(), te.task.clone());
            }
            Event::Snapshot(s) => *self = (**s).clone(),
        }
    }

    fn set_review(&mut self, m: &ReviewMark) {
        let v = self
            .versions
            .get_mut(&m.image_id)
            .and_then(|h| h.get_mut(m.version_no as usize - 1))
            .expect("checked before mutation");
        v.review = m.review;
        v.reviewer_id = Some(m.reviewer_id.clone());
        v.reviewed_at = Some(m.reviewed_at);
    }
}
