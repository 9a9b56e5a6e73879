//! Crash-resolution trials: ask a completion provider for candidate patches,
//! then drive patch → build → reproduce for every candidate through the
//! orchestrator and log one outcome per candidate.
//!
//! Trials always run against the fix's first parent: that is the tree the
//! reference crash was captured on, so a candidate is judged on exactly the
//! kernel it claims to repair. Candidates are independent — a resolved one
//! does not stop the rest — and infrastructure trouble requeues a chain up
//! to twice before the candidate is quarantined with its outcome flagged,
//! never counted as a plain failure.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crashgym_core::model::{BenchSample, BugId};
use crashgym_core::outcome::{read_outcomes, FailureStage, LogError, TrialOutcome};
use crashgym_core::patch;
use crashgym_core::prompt::{
    assemble, AssembleOutcome, AssembledPrompt, PromptBudget, PromptError, SkipReason,
};
use crashgym_core::retrieval::{
    oracle_files, FileCorpus, RetrievalError, RetrievalMode, RetrievalResult,
};

use crate::gitstore::{GitError, GitStore};
use crate::runtime::{JobRunner, RuntimeError};
use crate::scheduler::{Job, JobStatus, StepKind, StepResult, StepSpec};

/// Candidates requested per bug when nothing else is configured.
pub const DEFAULT_TOP_N: usize = 10;
/// Files requested from ranked retrieval.
pub const DEFAULT_RETRIEVAL_K: usize = 3;
/// Infrastructure failures requeue a candidate chain this many extra times
/// before the candidate is quarantined.
pub const MAX_INFRA_REQUEUES: usize = 2;

#[derive(Debug, Error)]
#[error("provider: {0}")]
pub struct ProviderError(pub String);

/// Produces candidate patches for a prompt.
///
/// Implementations must return at most `n` texts. The bug id rides along as
/// a correlation key so recorded-fixture providers can replay by bug; live
/// providers are free to ignore it.
pub trait CompletionProvider {
    fn complete(&mut self, bug: &BugId, prompt: &str, n: usize)
        -> Result<Vec<String>, ProviderError>;
}

/// Replays recorded outputs from `<root>/<bug_id>/<index>.txt`.
///
/// Deterministic by construction: candidate `i` always reads the same file,
/// so a top-1 run sees a prefix of a top-10 run.
pub struct FixtureProvider {
    root: PathBuf,
}

impl FixtureProvider {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        FixtureProvider { root: root.into() }
    }
}

impl CompletionProvider for FixtureProvider {
    fn complete(
        &mut self,
        bug: &BugId,
        _prompt: &str,
        n: usize,
    ) -> Result<Vec<String>, ProviderError> {
        let dir = self.root.join(bug.as_str());
        let mut out = Vec::new();
        for index in 0..n {
            let path = dir.join(format!("{index}.txt"));
            match std::fs::read_to_string(&path) {
                Ok(text) => out.push(text),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => break,
                Err(e) => {
                    return Err(ProviderError(format!("fixture {}: {e}", path.display())))
                }
            }
        }
        Ok(out)
    }
}

/// Fixed per-bug outputs for tests.
#[derive(Debug, Default)]
pub struct ScriptedProvider {
    outputs: BTreeMap<String, Vec<String>>,
}

impl ScriptedProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn script(mut self, bug_id: &str, candidates: Vec<String>) -> Self {
        self.outputs.insert(bug_id.to_string(), candidates);
        self
    }
}

impl CompletionProvider for ScriptedProvider {
    fn complete(
        &mut self,
        bug: &BugId,
        _prompt: &str,
        n: usize,
    ) -> Result<Vec<String>, ProviderError> {
        let mut out = self.outputs.get(bug.as_str()).cloned().unwrap_or_default();
        out.truncate(n);
        Ok(out)
    }
}

#[derive(Debug, Error)]
pub enum ResolveError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("git lookup failed: {0}")]
    Git(#[from] GitError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error("prompt assembly: {0}")]
    Prompt(#[from] PromptError),
    #[error("retrieval: {0}")]
    Retrieval(#[from] RetrievalError),
    #[error("gold fix does not parse: {0}")]
    GoldFix(crashgym_core::patch::PatchParseError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("outcome log io: {0}")]
    Io(#[from] std::io::Error),
    #[error("outcome log encoding: {0}")]
    Encoding(#[from] serde_json::Error),
}

// ---------------------------------------------------------------------------
// Resolver

/// Drives resolution trials for one dataset against one configured git tree.
pub struct Resolver {
    git_url: String,
    git: GitStore,
    pub setting: RetrievalMode,
    pub budget: PromptBudget,
    pub top_n: usize,
    pub retrieval_k: usize,
    pub timeout_minutes: u32,
}

impl Resolver {
    pub fn new(git_url: &str, setting: RetrievalMode) -> Result<Self, GitError> {
        let git = GitStore::clone_repo(git_url)?;
        Ok(Resolver {
            git_url: git_url.to_string(),
            git,
            setting,
            budget: PromptBudget::new(50_000),
            top_n: DEFAULT_TOP_N,
            retrieval_k: DEFAULT_RETRIEVAL_K,
            timeout_minutes: crate::reproducer::DEFAULT_TIMEOUT_MINUTES,
        })
    }

    /// Assembles the repair prompt for one sample at its parent commit, or
    /// reports the deliberate skip.
    pub fn prompt_for(&mut self, sample: &BenchSample) -> Result<AssembleOutcome, ResolveError> {
        let tree = self.git.tree_at(sample.commit_parent.as_str())?.clone();
        let retrieval = match self.setting {
            RetrievalMode::Oracle => {
                let paths = oracle_files(sample).map_err(ResolveError::GoldFix)?;
                RetrievalResult {
                    mode: RetrievalMode::Oracle,
                    k: paths.len(),
                    scores: vec![0.0; paths.len()],
                    ranked_paths: paths,
                }
            }
            RetrievalMode::Bm25 => {
                let corpus = FileCorpus::build(sample.commit_parent.as_str(), tree.clone());
                corpus.bm25_rank(&sample.crash_parent.raw_console, self.retrieval_k)?
            }
        };
        Ok(assemble(sample, &retrieval, &tree, &self.budget)?)
    }

    /// Runs one bug's candidates end to end and returns an outcome per
    /// candidate, in candidate order.
    ///
    /// Duplicate candidate texts (after extraction) share one job chain;
    /// the duplicate outcome repeats the verdict under its own index.
    pub fn run_trial<R: JobRunner>(
        &mut self,
        runner: &mut R,
        sample: &BenchSample,
        prompt: &AssembledPrompt,
        provider: &mut dyn CompletionProvider,
        n: usize,
    ) -> Result<Vec<TrialOutcome>, ResolveError> {
        let mut candidates = provider.complete(&sample.bug_id, &prompt.text, n)?;
        if candidates.len() > n {
            log::warn!("provider returned {} candidates for n={n}; truncating", candidates.len());
            candidates.truncate(n);
        }
        let mut outcomes: Vec<TrialOutcome> = Vec::with_capacity(candidates.len());
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        for (index, raw) in candidates.iter().enumerate() {
            let outcome = match patch::extract_patch(raw) {
                Err(_) => base_outcome(sample, prompt.setting, index, false, None)
                    .with_failure(FailureStage::NoPatch),
                Ok(text) => match seen.get(&text) {
                    Some(&first) => {
                        let mut dup = outcomes[first].clone();
                        dup.candidate_index = index;
                        dup
                    }
                    None => {
                        seen.insert(text.clone(), index);
                        self.run_candidate(runner, sample, prompt.setting, index, &text)?
                    }
                },
            };
            debug_assert!(outcome.validate().is_ok(), "inconsistent outcome: {outcome:?}");
            outcomes.push(outcome);
        }
        Ok(outcomes)
    }

    fn run_candidate<R: JobRunner>(
        &mut self,
        runner: &mut R,
        sample: &BenchSample,
        setting: RetrievalMode,
        index: usize,
        text: &str,
    ) -> Result<TrialOutcome, ResolveError> {
        let base = |job_ids: Vec<String>| {
            let mut o = base_outcome(sample, setting, index, true, Some(text.to_string()));
            o.job_ids = job_ids;
            o
        };
        if patch::parse(text).is_err() {
            return Ok(base(vec![]).with_failure(FailureStage::Malformed));
        }

        let mut job_ids = Vec::new();
        for round in 0..=MAX_INFRA_REQUEUES {
            let mut name = format!("resolve/{setting}/{}/c{index}", sample.bug_id.as_str());
            if round > 0 {
                name.push_str(&format!("/r{round}"));
            }
            let job_id = runner.submit_named(&name, self.candidate_steps(sample, text))?;
            job_ids.push(job_id.clone());
            let job = runner.run_to_completion(&job_id)?;
            match interpret_candidate(&job) {
                CandidateVerdict::Resolved => {
                    let mut o = base(job_ids);
                    o.applied = true;
                    o.resolved = true;
                    return Ok(o);
                }
                CandidateVerdict::StillCrashes => {
                    let mut o = base(job_ids).with_failure(FailureStage::StillCrashes);
                    o.applied = true;
                    return Ok(o);
                }
                CandidateVerdict::Rejected(stage) => {
                    return Ok(base(job_ids).with_failure(stage));
                }
                CandidateVerdict::Infrastructure { during_reproduce, reason } => {
                    if round == MAX_INFRA_REQUEUES {
                        log::warn!(
                            "candidate {index} of {} quarantined after {round} requeues: {reason}",
                            sample.bug_id.as_str()
                        );
                        // The chain died where the infrastructure did: keep
                        // the stage truthful so the flagged outcome still
                        // satisfies the progression invariants.
                        let stage = if during_reproduce {
                            FailureStage::StillCrashes
                        } else {
                            FailureStage::CompileError
                        };
                        let mut o = base(job_ids).with_failure(stage);
                        o.applied = during_reproduce;
                        o.infrastructure = true;
                        return Ok(o);
                    }
                }
            }
        }
        unreachable!("requeue loop always returns");
    }

    fn candidate_steps(&self, sample: &BenchSample, patch_text: &str) -> Vec<StepSpec> {
        vec![
            StepSpec {
                kind: StepKind::Build,
                params: serde_json::json!({
                    "git_url": self.git_url,
                    "commit_id": sample.commit_parent.as_str(),
                    "kernel_config": sample.config,
                    "patch": patch_text,
                }),
            },
            StepSpec {
                kind: StepKind::Reproduce,
                params: serde_json::json!({
                    "reproducer": sample.reproducer,
                    "timeout_minutes": self.timeout_minutes,
                }),
            },
        ]
    }

    /// Runs trials for every sample not already present in the log, appending
    /// outcomes bug by bug.
    ///
    /// The log is the checkpoint: a bug's outcomes are appended in one write
    /// once its trial finishes, so an interrupted campaign resumes exactly at
    /// the first unfinished bug and the union of both runs equals an
    /// uninterrupted one.
    pub fn run_campaign<R: JobRunner>(
        &mut self,
        runner: &mut R,
        samples: &[BenchSample],
        provider: &mut dyn CompletionProvider,
        log_path: &Path,
    ) -> Result<CampaignSummary, ResolveError> {
        let done: BTreeSet<String> = if log_path.exists() {
            read_outcomes(log_path)?
                .into_iter()
                .map(|o| o.bug_id.as_str().to_string())
                .collect()
        } else {
            BTreeSet::new()
        };
        let mut summary = CampaignSummary::default();
        for sample in samples {
            let bug = sample.bug_id.clone();
            if done.contains(bug.as_str()) {
                summary.resumed += 1;
                continue;
            }
            let prompt = match self.prompt_for(sample) {
                Ok(AssembleOutcome::Prompt(p)) => p,
                Ok(AssembleOutcome::Skip(reason)) => {
                    summary.skipped.push(SkippedBug { bug_id: bug, reason });
                    continue;
                }
                Err(e @ (ResolveError::Io(_) | ResolveError::Encoding(_))) => return Err(e),
                Err(e) => {
                    summary.quarantined.push(QuarantinedBug { bug_id: bug, reason: e.to_string() });
                    continue;
                }
            };
            match self.run_trial(runner, sample, &prompt, provider, self.top_n) {
                Ok(outcomes) if outcomes.is_empty() => {
                    summary.quarantined.push(QuarantinedBug {
                        bug_id: bug,
                        reason: "provider returned no candidates".to_string(),
                    });
                }
                Ok(outcomes) => {
                    append_all(log_path, &outcomes)?;
                    summary.completed += 1;
                }
                Err(ResolveError::Provider(e)) => {
                    summary
                        .quarantined
                        .push(QuarantinedBug { bug_id: bug, reason: e.to_string() });
                }
                Err(e) => return Err(e),
            }
        }
        Ok(summary)
    }
}

fn base_outcome(
    sample: &BenchSample,
    setting: RetrievalMode,
    index: usize,
    extracted: bool,
    patch_text: Option<String>,
) -> TrialOutcome {
    TrialOutcome {
        bug_id: sample.bug_id.clone(),
        setting,
        candidate_index: index,
        extracted,
        applied: false,
        resolved: false,
        failure_stage: None,
        infrastructure: false,
        patch_text,
        job_ids: vec![],
    }
}

trait WithFailure {
    fn with_failure(self, stage: FailureStage) -> Self;
}

impl WithFailure for TrialOutcome {
    fn with_failure(mut self, stage: FailureStage) -> Self {
        self.failure_stage = Some(stage);
        self
    }
}

enum CandidateVerdict {
    Resolved,
    StillCrashes,
    /// A genuine candidate failure before the reproducer could run.
    Rejected(FailureStage),
    Infrastructure {
        during_reproduce: bool,
        reason: String,
    },
}

/// Maps a finished candidate chain onto a verdict.
///
/// Failure reasons carry the builder's error text; the stable prefixes
/// distinguish a rejected patch from a broken build. Anything else — boot
/// failures, lost workers, storage trouble — is infrastructure.
fn interpret_candidate(job: &Job) -> CandidateVerdict {
    if job.status == JobStatus::Succeeded {
        let crashed = job
            .steps
            .last()
            .and_then(|s| s.result.as_ref())
            .and_then(|r| match r {
                StepResult::Succeeded { result, .. } => result.get("crashed"),
                StepResult::Failed { .. } => None,
            })
            .and_then(|v| v.as_bool())
            .unwrap_or(true);
        return if crashed { CandidateVerdict::StillCrashes } else { CandidateVerdict::Resolved };
    }
    let failed = job
        .steps
        .iter()
        .enumerate()
        .find_map(|(i, step)| match &step.result {
            Some(StepResult::Failed { reason, infrastructure }) => {
                Some((i, step.kind, reason.clone(), *infrastructure))
            }
            _ => None,
        });
    let Some((_, kind, reason, infrastructure)) = failed else {
        return CandidateVerdict::Infrastructure {
            during_reproduce: false,
            reason: format!("job {} ended without a failed step", job.job_id),
        };
    };
    let during_reproduce = kind != StepKind::Build;
    if infrastructure {
        return CandidateVerdict::Infrastructure { during_reproduce, reason };
    }
    if kind == StepKind::Build {
        if reason.starts_with("patch rejected") {
            return CandidateVerdict::Rejected(FailureStage::HunkMismatch);
        }
        if reason.starts_with("compile error") {
            return CandidateVerdict::Rejected(FailureStage::CompileError);
        }
    }
    // Non-infrastructure failures that are not the candidate's fault
    // (unknown commits, rejected specs) void the chain rather than the
    // candidate.
    CandidateVerdict::Infrastructure { during_reproduce, reason }
}

// ---------------------------------------------------------------------------
// Campaign bookkeeping

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedBug {
    pub bug_id: BugId,
    pub reason: SkipReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuarantinedBug {
    pub bug_id: BugId,
    pub reason: String,
}

#[derive(Debug, Default, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    /// Bugs whose outcomes were written during this run.
    pub completed: usize,
    /// Bugs skipped because the log already held their outcomes.
    pub resumed: usize,
    pub skipped: Vec<SkippedBug>,
    pub quarantined: Vec<QuarantinedBug>,
}

/// One append per bug keeps the log bug-atomic under interruption.
fn append_all(path: &Path, outcomes: &[TrialOutcome]) -> Result<(), ResolveError> {
    let mut buf = Vec::new();
    for outcome in outcomes {
        serde_json::to_writer(&mut buf, outcome)?;
        buf.push(b'\n');
    }
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    file.write_all(&buf)?;
    file.flush()?;
    Ok(())
}
