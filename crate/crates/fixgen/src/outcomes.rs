//! Materializes the recorded campaign logs: for each model/setting pair
//! a JSONL trial log whose per-bug rows follow the roles in the design
//! tables, shaped exactly like the resolver would have written them.

use crashgym_core::fixtures::CampaignLogSpec;
use crashgym_core::model::BenchSample;
use crashgym_core::outcome::{FailureStage, TrialOutcome};
use crashgym_core::patch::{self, DiffFile, DiffLine, Hunk, LineOp};
use sha2::{Digest, Sha256};

use crate::design::{self, LogPlan, Role};

pub struct CampaignLog {
    pub spec: CampaignLogSpec,
    pub outcomes: Vec<TrialOutcome>,
}

pub fn log_file_name(plan: &LogPlan) -> String {
    format!("{}-{}.jsonl", plan.model, plan.setting)
}

pub fn generate(samples: &[BenchSample]) -> Vec<CampaignLog> {
    design::log_plans()
        .iter()
        .map(|plan| CampaignLog {
            spec: CampaignLogSpec {
                model: plan.model.to_string(),
                setting: plan.setting,
                log: log_file_name(plan),
            },
            outcomes: log_outcomes(plan, samples),
        })
        .collect()
}

fn log_outcomes(plan: &LogPlan, samples: &[BenchSample]) -> Vec<TrialOutcome> {
    let mut rows = Vec::with_capacity(plan.eligible * plan.n);
    for idx in 0..plan.eligible {
        let role = plan.roles[&idx];
        for candidate in 0..plan.n {
            let row = row_for(plan, samples, idx, role, candidate);
            row.validate()
                .unwrap_or_else(|e| panic!("{} idx {idx} c{candidate}: {e}", plan.model));
            rows.push(row);
        }
    }
    rows
}

/// The candidate slot a single-output model uses is 0; ranked models
/// put their designed hit at slot 5 or 0 per the role.
fn row_for(
    plan: &LogPlan,
    samples: &[BenchSample],
    idx: usize,
    role: Role,
    candidate: usize,
) -> TrialOutcome {
    let sample = &samples[idx];
    let solo = plan.n == 1;
    let hit_slot = |c0: bool| if c0 || solo { 0 } else { 5 };
    match role {
        Role::SolvedC0 | Role::SolvedC5 if candidate == hit_slot(role == Role::SolvedC0) => {
            resolved_row(plan, sample, candidate)
        }
        Role::ApplyC0 | Role::ApplyC5 if candidate == hit_slot(role == Role::ApplyC0) => {
            still_crashes_row(plan, sample, candidate, idx)
        }
        Role::Extra if candidate == hit_slot(false) => {
            mismatch_row(plan, sample, candidate, cover_patch(idx, design::gold_tuple_count(idx)))
        }
        Role::Partial { hits } if candidate == hit_slot(false) => {
            mismatch_row(plan, sample, candidate, cover_patch(idx, hits))
        }
        _ => no_patch_row(plan, sample, candidate),
    }
}

fn base_row(plan: &LogPlan, sample: &BenchSample, candidate: usize) -> TrialOutcome {
    TrialOutcome {
        bug_id: sample.bug_id.clone(),
        setting: plan.setting,
        candidate_index: candidate,
        extracted: false,
        applied: false,
        resolved: false,
        failure_stage: None,
        infrastructure: false,
        patch_text: None,
        job_ids: Vec::new(),
    }
}

fn job_id(plan: &LogPlan, sample: &BenchSample, candidate: usize) -> String {
    let mut h = Sha256::new();
    h.update(plan.model.as_bytes());
    h.update([b'/']);
    h.update(plan.setting.to_string().as_bytes());
    h.update([b'/']);
    h.update(sample.bug_id.as_str().as_bytes());
    h.update(candidate.to_le_bytes());
    let digest = h.finalize();
    let mut s = String::from("job-");
    for byte in digest.iter().take(6) {
        s.push_str(&format!("{byte:02x}"));
    }
    s
}

fn resolved_row(plan: &LogPlan, sample: &BenchSample, candidate: usize) -> TrialOutcome {
    let mut row = base_row(plan, sample, candidate);
    row.extracted = true;
    row.applied = true;
    row.resolved = true;
    row.patch_text = Some(sample.gold_fix.clone());
    row.job_ids = vec![job_id(plan, sample, candidate)];
    row
}

fn still_crashes_row(
    plan: &LogPlan,
    sample: &BenchSample,
    candidate: usize,
    idx: usize,
) -> TrialOutcome {
    let mut row = base_row(plan, sample, candidate);
    row.extracted = true;
    row.applied = true;
    row.failure_stage = Some(FailureStage::StillCrashes);
    row.patch_text = Some(offtarget_patch(idx));
    row.job_ids = vec![job_id(plan, sample, candidate)];
    row
}

fn mismatch_row(
    plan: &LogPlan,
    sample: &BenchSample,
    candidate: usize,
    text: String,
) -> TrialOutcome {
    let mut row = base_row(plan, sample, candidate);
    row.extracted = true;
    row.failure_stage = Some(FailureStage::HunkMismatch);
    row.patch_text = Some(text);
    row.job_ids = vec![job_id(plan, sample, candidate)];
    row
}

fn no_patch_row(plan: &LogPlan, sample: &BenchSample, candidate: usize) -> TrialOutcome {
    let mut row = base_row(plan, sample, candidate);
    row.failure_stage = Some(FailureStage::NoPatch);
    row
}

// ---------------------------------------------------------------------------
// Candidate patch texts

/// A model attempt touching the first `hits` gold locations with a
/// different edit to the gold one; recorded as failing to apply.
fn cover_patch(idx: usize, hits: usize) -> String {
    let tuples = design::gold_tuples(idx);
    let mut files: Vec<DiffFile> = Vec::new();
    for &(file, role) in &tuples[..hits] {
        let path = design::gold_path(idx, file);
        let hunk = Hunk {
            old_start: 21 + 9 * role,
            old_len: 3,
            new_start: 21 + 9 * role,
            new_len: 4,
            context_header: design::context_header(idx, role),
            lines: vec![
                DiffLine::new(LineOp::Context, "\tspin_lock(&dev->state_lock);"),
                DiffLine::new(LineOp::Add, "\tkbs_mitigate(dev);"),
                DiffLine::new(LineOp::Context, "\tdev->pending = 0;"),
                DiffLine::new(LineOp::Context, "\tspin_unlock(&dev->state_lock);"),
            ],
        };
        match files.iter_mut().find(|f| f.target_path() == path) {
            Some(existing) => existing.hunks.push(hunk),
            None => files.push(DiffFile {
                old_path: Some(path.clone()),
                new_path: Some(path),
                hunks: vec![hunk],
            }),
        }
    }
    patch::render(&files)
}

/// A model attempt landing in the right file but an unrelated function;
/// it applies and builds, yet the crash persists.
fn offtarget_patch(idx: usize) -> String {
    let path = design::gold_path(idx, 0);
    let file = DiffFile {
        old_path: Some(path.clone()),
        new_path: Some(path),
        hunks: vec![Hunk {
            old_start: 12,
            old_len: 3,
            new_start: 12,
            new_len: 4,
            context_header: format!("static void kbs{idx:04}_irq(struct kbs_dev *dev)"),
            lines: vec![
                DiffLine::new(LineOp::Context, "\tif (dev->stopped)"),
                DiffLine::new(LineOp::Context, "\t\treturn;"),
                DiffLine::new(LineOp::Add, "\twmb();"),
                DiffLine::new(LineOp::Context, "\tkbs_kick(dev);"),
            ],
        }],
    };
    patch::render(&[file])
}
