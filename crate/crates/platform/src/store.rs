//! Persistence for the scheduler: a single append-only JSON-lines
//! journal of job events, replayed through the same transition code the
//! live scheduler uses. The journal is the source of truth; the
//! materialized job table is always derived.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Millis;
use crate::scheduler::{StepResult, StepSpec};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store unavailable at {path}: {source}")]
    Unavailable {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("journal corrupt at {path}:{line}: {message}")]
    Corrupt { path: String, line: usize, message: String },
}

/// One durable scheduler event. Every state change is an event; nothing
/// mutates the materialized state except `State::apply`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum Event {
    JobSubmitted { job_id: String, steps: Vec<StepSpec>, at: Millis },
    StepEnqueued { job_id: String, step_index: usize, attempt: u32, at: Millis },
    StepStarted { job_id: String, step_index: usize, attempt: u32, worker_id: String, at: Millis },
    StepFinished {
        job_id: String,
        step_index: usize,
        attempt: u32,
        result: StepResult,
        at: Millis,
    },
    /// A dispatched message's visibility deadline passed without a result.
    StepLost { job_id: String, step_index: usize, attempt: u32, at: Millis },
    JobCancelled { job_id: String, at: Millis },
}

impl Event {
    pub fn job_id(&self) -> &str {
        match self {
            Event::JobSubmitted { job_id, .. }
            | Event::StepEnqueued { job_id, .. }
            | Event::StepStarted { job_id, .. }
            | Event::StepFinished { job_id, .. }
            | Event::StepLost { job_id, .. }
            | Event::JobCancelled { job_id, .. } => job_id,
        }
    }
}

/// Append-only journal with write-ahead semantics: `append` flushes the
/// line before the caller applies the event to in-memory state.
pub struct Journal {
    path: PathBuf,
    file: File,
}

impl Journal {
    pub fn open(path: &Path) -> Result<Journal, StoreError> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)
                .map_err(|e| StoreError::Unavailable { path: path.display().to_string(), source: e })?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| StoreError::Unavailable { path: path.display().to_string(), source: e })?;
        Ok(Journal { path: path.to_path_buf(), file })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, event: &Event) -> Result<(), StoreError> {
        let mut line = serde_json::to_string(event).expect("events serialize");
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|()| self.file.flush())
            .map_err(|e| StoreError::Unavailable { path: self.path.display().to_string(), source: e })
    }

    /// Load the journal and reopen it for appending, truncating a torn
    /// final line (crash mid-write) so later appends stay framed.
    pub fn recover(path: &Path) -> Result<(Journal, Vec<Event>), StoreError> {
        let events = Journal::load(path)?;
        if path.exists() {
            let mut rewritten = String::new();
            for e in &events {
                rewritten.push_str(&serde_json::to_string(e).expect("events serialize"));
                rewritten.push('\n');
            }
            let tmp = path.with_extension("tmp");
            fs::write(&tmp, rewritten.as_bytes())
                .and_then(|()| fs::rename(&tmp, path))
                .map_err(|e| StoreError::Unavailable { path: path.display().to_string(), source: e })?;
        }
        Ok((Journal::open(path)?, events))
    }

    /// Replay the journal. A torn final line (crash mid-write) is
    /// discarded; corruption anywhere earlier is an error.
    pub fn load(path: &Path) -> Result<Vec<Event>, StoreError> {
        if !path.exists() {
            return Ok(Vec::new());
        }
        let file = File::open(path)
            .map_err(|e| StoreError::Unavailable { path: path.display().to_string(), source: e })?;
        let mut events = Vec::new();
        let mut pending: Option<(usize, String)> = None;
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line
                .map_err(|e| StoreError::Unavailable { path: path.display().to_string(), source: e })?;
            if let Some((line_no, bad)) = pending.take() {
                return Err(StoreError::Corrupt {
                    path: path.display().to_string(),
                    line: line_no,
                    message: format!("unparseable event before end of journal: {bad}"),
                });
            }
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<Event>(&line) {
                Ok(event) => events.push(event),
                Err(e) => pending = Some((idx + 1, e.to_string())),
            }
        }
        Ok(events)
    }
}
