//! Append-only JSON-lines journal.
//!
//! Each line is `{"seq":u64,"ts":RFC3339,"type":..,"payload":{..}}`. A record
//! counts only once its terminating newline is on disk. Anything after the
//! last well-formed record is treated as a torn tail and dropped on open; a
//! well-formed record following a malformed one means real corruption.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::state::{Event, State};
use super::StoreError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Durability {
    /// `fsync` every record before acknowledging it.
    #[default]
    Fsync,
    /// Hand records to the OS only; survives process crashes, not power loss.
    Flush,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct JournalRecord {
    pub seq: u64,
    pub ts: DateTime<Utc>,
    #[serde(flatten)]
    pub event: Event,
}

pub(crate) struct Replayed {
    pub state: State,
    pub last_seq: u64,
    pub valid_len: u64,
    pub records: usize,
}

/// Rebuilds state from the journal at `path`. A missing file is an empty
/// journal.
pub fn replay_journal(path: &Path) -> Result<State, StoreError> {
    Ok(replay(path)?.state)
}

pub(crate) fn replay(path: &Path) -> Result<Replayed, StoreError> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    let mut out = Replayed {
        state: State::default(),
        last_seq: 0,
        valid_len: 0,
        records: 0,
    };
    let mut offset = 0usize;
    let mut bad_line: Option<usize> = None;
    for (line_no, chunk) in bytes.split_inclusive(|&b| b == b'\n').enumerate() {
        let start = offset;
        offset += chunk.len();
        let complete = chunk.ends_with(b"\n");
        let parsed = if complete {
            serde_json::from_slice::<JournalRecord>(&chunk[..chunk.len() - 1]).ok()
        } else {
            None
        };
        let Some(record) = parsed else {
            bad_line.get_or_insert(line_no + 1);
            continue;
        };
        if let Some(bad) = bad_line {
            return Err(StoreError::CorruptJournal(format!(
                "malformed record at line {bad} followed by a valid record at line {}",
                line_no + 1
            )));
        }
        let corrupt = |why: String| StoreError::CorruptJournal(format!("line {}: {why}", line_no + 1));
        if record.seq <= out.last_seq {
            return Err(corrupt(format!("seq {} after {}", record.seq, out.last_seq)));
        }
        if matches!(record.event, Event::Snapshot(_)) && out.records > 0 {
            return Err(corrupt("snapshot is not the first record".into()));
        }
        out.state.apply(&record.event).map_err(corrupt)?;
        out.last_seq = record.seq;
        out.records += 1;
        out.valid_len = (start + chunk.len()) as u64;
    }
    Ok(out)
}

pub(crate) struct JournalWriter {
    path: PathBuf,
    file: File,
    durability: Durability,
    pub last_seq: u64,
}

impl JournalWriter {
    /// Opens for appending after truncating any torn tail.
    pub fn open(path: &Path, valid_len: u64, last_seq: u64, durability: Durability) -> Result<Self, StoreError> {
        let file = OpenOptions::new().create(true).truncate(false).write(true).open(path)?;
        if file.metadata()?.len() != valid_len {
            file.set_len(valid_len)?;
            file.sync_all()?;
        }
        let file = OpenOptions::new().append(true).open(path)?;
        Ok(Self {
            path: path.to_owned(),
            file,
            durability,
            last_seq,
        })
    }

    pub fn append(&mut self, ts: DateTime<Utc>, event: &Event) -> Result<u64, StoreError> {
        let seq = self.last_seq + 1;
        let line = encode_line(seq, ts, event)?;
        self.file.write_all(&line)?;
        self.file.flush()?;
        if self.durability == Durability::Fsync {
            self.file.sync_data()?;
        }
        self.last_seq = seq;
        Ok(seq)
    }

    /// Replaces the journal with a single snapshot record.
    pub fn compact(&mut self, ts: DateTime<Utc>, state: &State) -> Result<(), StoreError> {
        let seq = self.last_seq + 1;
        let line = encode_line(seq, ts, &Event::Snapshot(Box::new(state.clone())))?;
        let tmp = self.path.with_extension("compact.tmp");
        {
            let mut f = File::create(&tmp)?;
            f.write_all(&line)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &self.path)?;
        if let Some(dir) = self.path.parent() {
            // persist the rename itself
            if let Ok(d) = File::open(dir) {
                let _ = d.sync_all();
            }
        }
        self.file = OpenOptions::new().append(true).open(&self.path)?;
        self.last_seq = seq;
        Ok(())
    }
}

fn encode_line(seq: u64, ts: DateTime<Utc>, event: &Event) -> Result<Vec<u8>, StoreError> {
    let record = JournalRecordRef { seq, ts, event };
    let mut line = serde_json::to_vec(&record).map_err(|e| StoreError::Io(e.to_string()))?;
    line.push(b'\n');
    Ok(line)
}

#[derive(Serialize)]
struct JournalRecordRef<'a> {
    seq: u64,
    ts: DateTime<Utc>,
    #[serde(flatten)]
    event: &'a Event,
}
