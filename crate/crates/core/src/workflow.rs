//! Roles, annotator identities and the per-task state machine.
//!
//! ```text
//!   assigned ──► in_progress ──► submitted ──► reviewed
//!      │              │
//!      └──────────────┴──────► skipped
//! ```
//!
//! A task is *open* while assigned or in progress. Each operation below is
//! journaled as exactly one record.

use chrono::{DateTime, Utc};
use rand::Rng;
use serde::{Deserialize, Serialize};
use subtle::ConstantTimeEq;

use crate::mask::{ImageRecord, ImageStatus};
use crate::sha256_hex;
use crate::store::{Event, Store, StoreError, TaskEvent, Verdict, VersionEntry, VersionKind};

/// Ordered by privilege: every role can do what the roles below it can.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Annotator,
    Senior,
    Researcher,
}

impl std::str::FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "annotator" => Ok(Role::Annotator),
            "senior" => Ok(Role::Senior),
            "researcher" => Ok(Role::Researcher),
            other => Err(format!("unknown role {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Annotator {
    pub annotator_id: String,
    pub display_name: String,
    pub role: Role,
    pub token_digest: String,
    pub active: bool,
    pub registered_at: DateTime<Utc>,
}

/// Result of a registration. The plaintext token exists only here.
#[derive(Clone, Debug, Serialize)]
pub struct Registration {
    pub annotator: Annotator,
    pub token: String,
    /// Another annotator already uses this display name. Not an error.
    pub duplicate_display_name: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskState {
    Assigned,
    InProgress,
    Submitted,
    Reviewed,
    Skipped,
}

/// The complete set of legal task transitions.
pub const TRANSITIONS: &[(TaskState, TaskState)] = &[
    (TaskState::Assigned, TaskState::InProgress),
    (TaskState::InProgress, TaskState::Submitted),
    (TaskState::InProgress, TaskState::Skipped),
    (TaskState::Submitted, TaskState::Reviewed),
    (TaskState::Assigned, TaskState::Skipped),
];

impl TaskState {
    pub fn can_transition(self, to: TaskState) -> bool {
        TRANSITIONS.contains(&(self, to))
    }

    pub fn is_open(self) -> bool {
        matches!(self, TaskState::Assigned | TaskState::InProgress)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub task_id: String,
    pub image_id: String,
    pub annotator_id: String,
    pub state: TaskState,
    pub quality_grade_at_skip: Option<f64>,
    pub skip_reason: Option<String>,
    /// Version produced by this task's submission.
    pub submitted_version: Option<u32>,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
    /// Every state the task has been in, oldest first.
    pub state_path: Vec<TaskState>,
}

impl Task {
    pub fn path_is_legal(&self) -> bool {
        self.state_path.first() == Some(&TaskState::Assigned)
            && self.state_path.last() == Some(&self.state)
            && self.state_path.windows(2).all(|w| w[0].can_transition(w[1]))
    }

    fn advance(&mut self, to: TaskState, now: DateTime<Utc>) -> Result<(), StoreError> {
        if !self.state.can_transition(to) {
            return Err(StoreError::IllegalTransition { from: self.state, to });
        }
        self.state = to;
        self.state_path.push(to);
        self.updated_at = now;
        Ok(())
    }
}

fn require(actor: &Annotator, role: Role, what: &str) -> Result<(), StoreError> {
    if actor.role >= role {
        Ok(())
    } else {
        Err(StoreError::Unauthorized(format!(
            "{what} requires the {role:?} role, {} is {:?}",
            actor.annotator_id, actor.role
        )))
    }
}

fn owned_task<'a>(state: &'a crate::store::State, task_id: &str, actor: &Annotator) -> Result<&'a Task, StoreError> {
    let task = state
        .tasks
        .get(task_id)
        .ok_or_else(|| StoreError::UnknownTask(task_id.to_owned()))?;
    if task.annotator_id != actor.annotator_id {
        return Err(StoreError::Unauthorized(format!(
            "task {task_id} belongs to {}",
            task.annotator_id
        )));
    }
    Ok(task)
}

fn new_token() -> String {
    let bytes: [u8; 32] = rand::rng().random();
    hex::encode(bytes)
}

impl Store {
    fn insert_annotator(&self, display_name: &str, role: Role) -> Result<Registration, StoreError> {
        let token = new_token();
        let token_digest = sha256_hex(token.as_bytes());
        self.commit(|state, now| {
            let annotator = Annotator {
                annotator_id: format!("ann-{:04}", state.annotators.len() + 1),
                display_name: display_name.to_owned(),
                role,
                token_digest,
                active: true,
                registered_at: now,
            };
            let duplicate_display_name = state.annotators.values().any(|a| a.display_name == display_name);
            let reg = Registration {
                annotator: annotator.clone(),
                token,
                duplicate_display_name,
            };
            Ok((Some(Event::AnnotatorRegistered(annotator)), reg))
        })
    }

    /// Creates the first researcher of an empty deployment. Returns `None`
    /// once any annotator exists.
    pub fn bootstrap_researcher(&self, display_name: &str) -> Result<Option<Registration>, StoreError> {
        if self.read(|s| !s.annotators.is_empty()) {
            return Ok(None);
        }
        self.insert_annotator(display_name, Role::Researcher).map(Some)
    }

    pub fn register_annotator(&self, actor: &Annotator, display_name: &str, role: Role) -> Result<Registration, StoreError> {
        require(actor, Role::Researcher, "registering annotators")?;
        if display_name.trim().is_empty() {
            return Err(StoreError::InvalidRequest("display name is empty".into()));
        }
        self.insert_annotator(display_name, role)
    }

    pub fn deactivate_annotator(&self, actor: &Annotator, annotator_id: &str) -> Result<Annotator, StoreError> {
        require(actor, Role::Researcher, "deactivating annotators")?;
        self.commit(|state, _| {
            let mut a = state
                .annotators
                .get(annotator_id)
                .cloned()
                .ok_or_else(|| StoreError::UnknownAnnotator(annotator_id.to_owned()))?;
            if !a.active {
                return Ok((None, a));
            }
            a.active = false;
            Ok((Some(Event::AnnotatorUpdated(a.clone())), a))
        })
    }

    pub fn annotators(&self) -> Vec<Annotator> {
        self.read(|s| s.annotators.values().cloned().collect())
    }

    /// Resolves a bearer token. Every stored digest is compared in constant
    /// time; inactive annotators never authenticate.
    pub fn authenticate(&self, token: &str) -> Result<Annotator, StoreError> {
        let digest = sha256_hex(token.as_bytes());
        self.read(|s| {
            let mut found = None;
            for a in s.annotators.values() {
                if bool::from(a.token_digest.as_bytes().ct_eq(digest.as_bytes())) {
                    found = Some(a);
                }
            }
            match found {
                Some(a) if a.active => Ok(a.clone()),
                _ => Err(StoreError::Unauthenticated),
            }
        })
    }

    pub fn enroll(&self, actor: &Annotator, png: &[u8], source_name: &str) -> Result<(ImageRecord, bool), StoreError> {
        require(actor, Role::Researcher, "enrolling images")?;
        self.enroll_image(png, source_name)
    }

    pub fn assign(&self, actor: &Annotator, image_id: &str, annotator_id: &str) -> Result<Task, StoreError> {
        require(actor, Role::Researcher, "assigning tasks")?;
        self.commit(|state, now| {
            let image = state
                .images
                .get(image_id)
                .ok_or_else(|| StoreError::UnknownImage(image_id.to_owned()))?;
            match state.annotators.get(annotator_id) {
                Some(a) if a.active => {}
                _ => return Err(StoreError::UnknownAnnotator(annotator_id.to_owned())),
            }
            if image.status == ImageStatus::Reviewed {
                return Err(StoreError::IllegalState(format!("image {image_id} is already reviewed")));
            }
            if state
                .tasks
                .values()
                .any(|t| t.image_id == image_id && t.annotator_id == annotator_id && t.state.is_open())
            {
                return Err(StoreError::DuplicateOpenTask {
                    image_id: image_id.to_owned(),
                    annotator_id: annotator_id.to_owned(),
                });
            }
            let task = Task {
                task_id: format!("t{:06}", state.tasks.len() + 1),
                image_id: image_id.to_owned(),
                annotator_id: annotator_id.to_owned(),
                state: TaskState::Assigned,
                quality_grade_at_skip: None,
                skip_reason: None,
                submitted_version: None,
                created_at: now,
                updated_at: now,
                state_path: vec![TaskState::Assigned],
            };
            let image_status = matches!(image.status, ImageStatus::Pending | ImageStatus::Skipped)
                .then_some(ImageStatus::Assigned);
            let event = TaskEvent {
                task: task.clone(),
                image_status,
                review: None,
                version: None,
            };
            Ok((Some(Event::TaskEvent(Box::new(event))), task))
        })
    }

    pub fn task(&self, task_id: &str) -> Result<Task, StoreError> {
        self.read(|s| s.tasks.get(task_id).cloned())
            .ok_or_else(|| StoreError::UnknownTask(task_id.to_owned()))
    }

    /// Open tasks of one annotator, least recently updated first.
    pub fn next_tasks(&self, annotator_id: &str) -> Result<Vec<Task>, StoreError> {
        self.read(|s| {
            if !s.annotators.contains_key(annotator_id) {
                return Err(StoreError::UnknownAnnotator(annotator_id.to_owned()));
            }
            let mut open: Vec<Task> = s
                .tasks
                .values()
                .filter(|t| t.annotator_id == annotator_id && t.state.is_open())
                .cloned()
                .collect();
            open.sort_by(|a, b| (a.updated_at, &a.task_id).cmp(&(b.updated_at, &b.task_id)));
            Ok(open)
        })
    }

    pub fn tasks(&self) -> Vec<Task> {
        self.read(|s| s.tasks.values().cloned().collect())
    }

    /// Marks an assigned task as being worked on.
    pub fn start(&self, actor: &Annotator, task_id: &str) -> Result<Task, StoreError> {
        self.commit(|state, now| {
            let mut task = owned_task(state, task_id, actor)?.clone();
            task.advance(TaskState::InProgress, now)?;
            let event = TaskEvent {
                task: task.clone(),
                image_status: None,
                review: None,
                version: None,
            };
            Ok((Some(Event::TaskEvent(Box::new(event))), task))
        })
    }

    /// Stores the annotator's mask as a manual version and closes the task.
    /// An assigned task passes through in_progress on the way.
    pub fn submit(&self, actor: &Annotator, task_id: &str, lseg: &[u8]) -> Result<VersionEntry, StoreError> {
        let task = self.read(|s| owned_task(s, task_id, actor).cloned())?;
        if !task.state.is_open() {
            return Err(StoreError::IllegalTransition {
                from: task.state,
                to: TaskState::Submitted,
            });
        }
        let image = self.image(&task.image_id)?;
        self.check_mask(&image, lseg)?;
        let blob = self.put_blob(lseg)?;
        self.commit(|state, now| {
            let mut task = owned_task(state, task_id, actor)?.clone();
            if task.state == TaskState::Assigned {
                task.advance(TaskState::InProgress, now)?;
            }
            task.advance(TaskState::Submitted, now)?;
            let entry = Self::new_version(state, now, &task.image_id, &blob, &actor.annotator_id, VersionKind::Manual, None);
            task.submitted_version = Some(entry.version_no);
            let event = TaskEvent {
                task,
                image_status: Some(ImageStatus::Segmented),
                review: None,
                version: Some(entry.clone()),
            };
            Ok((Some(Event::TaskEvent(Box::new(event))), entry))
        })
    }

    /// Senior review of a submitted task. Approval marks the submitted
    /// version; a correction marks it and appends the senior's mask as a
    /// `correction` version, which is returned.
    pub fn review(
        &self,
        actor: &Annotator,
        task_id: &str,
        verdict: Verdict,
        correction: Option<&[u8]>,
    ) -> Result<VersionEntry, StoreError> {
        require(actor, Role::Senior, "reviewing")?;
        let task = self.task(task_id)?;
        if task.state != TaskState::Submitted {
            return Err(StoreError::IllegalTransition {
                from: task.state,
                to: TaskState::Reviewed,
            });
        }
        let blob = match (verdict, correction) {
            (Verdict::Corrected, None) => return Err(StoreError::MissingCorrection),
            (Verdict::Corrected, Some(bytes)) => {
                let image = self.image(&task.image_id)?;
                self.check_mask(&image, bytes)?;
                Some(self.put_blob(bytes)?)
            }
            (Verdict::Approved, _) => None,
        };
        self.commit(|state, now| {
            let mut task = state
                .tasks
                .get(task_id)
                .cloned()
                .ok_or_else(|| StoreError::UnknownTask(task_id.to_owned()))?;
            task.advance(TaskState::Reviewed, now)?;
            let reviewed_no = task
                .submitted_version
                .ok_or_else(|| StoreError::IllegalState(format!("task {task_id} has no submitted version")))?;
            let mark = Self::review_mark(state, now, &task.image_id, reviewed_no, &actor.annotator_id, verdict)?;
            let correction = blob.as_ref().map(|b| {
                Self::new_version(state, now, &task.image_id, b, &actor.annotator_id, VersionKind::Correction, None)
            });
            let mut result = match &correction {
                Some(c) => c.clone(),
                None => state.version(&task.image_id, reviewed_no).cloned().expect("checked by review_mark"),
            };
            if correction.is_none() {
                result.review = mark.review;
                result.reviewer_id = Some(mark.reviewer_id.clone());
                result.reviewed_at = Some(mark.reviewed_at);
            }
            let event = TaskEvent {
                task,
                image_status: Some(ImageStatus::Reviewed),
                review: Some(mark),
                version: correction,
            };
            Ok((Some(Event::TaskEvent(Box::new(event))), result))
        })
    }

    /// Skips an open task. The image becomes `skipped` only when no other
    /// task on it is still live.
    pub fn skip(&self, actor: &Annotator, task_id: &str, reason: &str, quality_grade: Option<f64>) -> Result<Task, StoreError> {
        if let Some(g) = quality_grade {
            if !g.is_finite() {
                return Err(StoreError::InvalidRequest("quality grade must be finite".into()));
            }
        }
        self.commit(|state, now| {
            let mut task = owned_task(state, task_id, actor)?.clone();
            task.advance(TaskState::Skipped, now)?;
            task.skip_reason = Some(reason.to_owned());
            task.quality_grade_at_skip = quality_grade;
            let others_live = state
                .tasks
                .values()
                .any(|t| t.image_id == task.image_id && t.task_id != task.task_id && t.state != TaskState::Skipped);
            let event = TaskEvent {
                task: task.clone(),
                image_status: (!others_live).then_some(ImageStatus::Skipped),
                review: None,
                version: None,
            };
            Ok((Some(Event::TaskEvent(Box::new(event))), task))
        })
    }

    /// Role-checked [`Store::restore`].
    pub fn restore_as(&self, actor: &Annotator, image_id: &str, version_no: u32) -> Result<VersionEntry, StoreError> {
        require(actor, Role::Senior, "restoring versions")?;
        self.restore(image_id, version_no, &actor.annotator_id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transition_table_is_exactly_the_declared_graph() {
        use TaskState::*;
        let all = [Assigned, InProgress, Submitted, Reviewed, Skipped];
        let mut legal = 0;
        for a in all {
            for b in all {
                if a.can_transition(b) {
                    legal += 1;
                }
            }
        }
        assert_eq!(legal, 5);
        assert!(Assigned.can_transition(Skipped));
        assert!(!Assigned.can_transition(Submitted));
        assert!(!Submitted.can_transition(Skipped));
        assert!(!Reviewed.can_transition(Assigned));
    }

    #[test]
    fn roles_are_ordered_by_privilege() {
        assert!(Role::Researcher > Role::Senior && Role::Senior > Role::Annotator);
        assert_eq!("senior".parse::<Role>(), Ok(Role::Senior));
        assert!("admin".parse::<Role>().is_err());
    }
}
