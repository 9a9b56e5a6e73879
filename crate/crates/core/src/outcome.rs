//! Per-candidate trial outcomes and the append-only JSON-lines log they
//! are streamed to during a campaign.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::BugId;
use crate::retrieval::RetrievalMode;

/// Pipeline stage at which a candidate stopped making progress.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureStage {
    /// No patch could be extracted from the model output.
    NoPatch,
    /// Extracted text is not a structurally valid diff.
    Malformed,
    /// Valid diff, but it does not apply to the tree.
    HunkMismatch,
    /// Applied, but the kernel does not compile.
    CompileError,
    /// Built and booted, but the reproducer still crashes it.
    StillCrashes,
}

/// Result of running one candidate patch end to end.
///
/// `applied` means parsed + applied + compiled; `resolved` means the
/// reproducer ran for the full timeout without crashing. Outcomes with
/// `infrastructure` set record voided runs and are excluded from metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub bug_id: BugId,
    pub setting: RetrievalMode,
    pub candidate_index: usize,
    pub extracted: bool,
    pub applied: bool,
    pub resolved: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_stage: Option<FailureStage>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub infrastructure: bool,
    /// The candidate diff as applied (present when extraction succeeded);
    /// localization analyses read it back from the log.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patch_text: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub job_ids: Vec<String>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OutcomeError {
    #[error("outcome for {bug} candidate {candidate}: {reason}")]
    Inconsistent { bug: BugId, candidate: usize, reason: &'static str },
}

impl TrialOutcome {
    /// Check the progression and failure-stage invariants.
    pub fn validate(&self) -> Result<(), OutcomeError> {
        let fail = |reason| {
            Err(OutcomeError::Inconsistent {
                bug: self.bug_id.clone(),
                candidate: self.candidate_index,
                reason,
            })
        };
        if self.resolved && !self.applied {
            return fail("resolved requires applied");
        }
        if self.applied && !self.extracted {
            return fail("applied requires extracted");
        }
        if self.failure_stage.is_none() != self.resolved {
            return fail("failure_stage must be absent exactly when resolved");
        }
        match self.failure_stage {
            Some(FailureStage::NoPatch) if self.extracted => {
                return fail("no-patch outcome cannot be extracted")
            }
            Some(FailureStage::Malformed | FailureStage::HunkMismatch | FailureStage::CompileError)
                if !self.extracted || self.applied =>
            {
                return fail("pre-apply failure must be extracted but not applied")
            }
            Some(FailureStage::StillCrashes) if !self.applied => {
                return fail("still-crashes outcome must have applied")
            }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("outcome log i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("outcome log line {line_no}: {source}")]
    Parse { line_no: usize, source: serde_json::Error },
}

/// Append one outcome to a JSON-lines log, flushing before returning.
pub fn append_outcome(path: &Path, outcome: &TrialOutcome) -> Result<(), LogError> {
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut line = serde_json::to_string(outcome).expect("outcome serializes");
    line.push('\n');
    file.write_all(line.as_bytes())?;
    file.flush()?;
    Ok(())
}

/// Read a full outcome log. A torn final line — the signature of a crash
/// mid-append — is dropped; corruption anywhere else is an error.
pub fn read_outcomes(path: &Path) -> Result<Vec<TrialOutcome>, LogError> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut outcomes = Vec::new();
    let mut pending: Option<(usize, serde_json::Error)> = None;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if let Some((line_no, source)) = pending.take() {
            // The bad line was not the tail after all.
            return Err(LogError::Parse { line_no, source });
        }
        match serde_json::from_str::<TrialOutcome>(&line) {
            Ok(outcome) => outcomes.push(outcome),
            Err(source) => pending = Some((idx + 1, source)),
        }
    }
    Ok(outcomes)
}

/// Overwrite a log wholesale (fixture generation and tests).
pub fn write_outcomes(path: &Path, outcomes: &[TrialOutcome]) -> Result<(), LogError> {
    let mut buf = String::new();
    for outcome in outcomes {
        buf.push_str(&serde_json::to_string(outcome).expect("outcome serializes"));
        buf.push('\n');
    }
    std::fs::write(path, buf)?;
    Ok(())
}
