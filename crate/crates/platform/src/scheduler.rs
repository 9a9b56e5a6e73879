//! The job scheduler: a single-writer state machine over a durable
//! event journal. Multi-step jobs run strictly sequentially; steps are
//! dispatched to worker pools through in-process queues with visibility
//! timeouts, and every state change is journaled before it is applied,
//! so replaying the journal through the same transition code always
//! reconstructs the live state.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use crate::artifacts::ArtifactRef;
use crate::clock::{Clock, Millis};
use crate::queue::InProcQueue;
use crate::store::{Event, Journal, StoreError};

/// Worker-loss retries per step; a semantic failure is never retried.
pub const MAX_WORKER_LOSS_RETRIES: u32 = 2;

const JOB_NAMESPACE: Uuid = Uuid::from_bytes(*b"crashgym-jobs\0\0\0");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepKind {
    Build,
    Reproduce,
    ParallelReproduce,
    RetrieveFile,
    CollectKernelLog,
}

impl StepKind {
    /// Which worker pool serves this kind.
    pub fn pool(self) -> Pool {
        match self {
            StepKind::Build | StepKind::RetrieveFile => Pool::Build,
            StepKind::Reproduce | StepKind::ParallelReproduce | StepKind::CollectKernelLog => {
                Pool::Reproduce
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pool {
    Build,
    Reproduce,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSpec {
    pub kind: StepKind,
    pub params: serde_json::Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepStatus {
    Pending,
    Dispatched,
    Running,
    Succeeded,
    Failed,
}

impl StepStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, StepStatus::Succeeded | StepStatus::Failed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JobStatus {
    Queued,
    Running,
    Succeeded,
    Failed,
    Cancelled,
}

impl JobStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobStatus::Succeeded | JobStatus::Failed | JobStatus::Cancelled)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum StepResult {
    Succeeded {
        result: serde_json::Value,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        artifact: Option<ArtifactRef>,
    },
    Failed {
        reason: String,
        #[serde(default)]
        infrastructure: bool,
    },
}

impl StepResult {
    pub fn is_success(&self) -> bool {
        matches!(self, StepResult::Succeeded { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobStep {
    pub kind: StepKind,
    pub params: serde_json::Value,
    pub status: StepStatus,
    pub attempt: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worker_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<StepResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub job_id: String,
    pub steps: Vec<JobStep>,
    pub status: JobStatus,
    pub created_at: Millis,
    pub updated_at: Millis,
    pub artifacts: BTreeMap<usize, ArtifactRef>,
}

/// A worker's report for one delivered step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultEnvelope {
    pub job_id: String,
    pub step_index: usize,
    pub attempt: u32,
    pub worker_id: String,
    pub message_id: String,
    pub result: StepResult,
}

#[derive(Debug, Error)]
pub enum SchedulerError {
    #[error("invalid job spec: {0}")]
    Validation(String),
    #[error("unknown job {0}")]
    UnknownJob(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

// ---------------------------------------------------------------------------
// Materialized state

/// All state is derived by folding events; nothing else mutates jobs.
#[derive(Debug, Default, Clone)]
pub struct State {
    pub jobs: BTreeMap<String, Job>,
}

impl State {
    pub fn apply(&mut self, event: &Event) {
        match event {
            Event::JobSubmitted { job_id, steps, at } => {
                let job = Job {
                    job_id: job_id.clone(),
                    steps: steps
                        .iter()
                        .map(|s| JobStep {
                            kind: s.kind,
                            params: s.params.clone(),
                            status: StepStatus::Pending,
                            attempt: 0,
                            worker_id: None,
                            result: None,
                        })
                        .collect(),
                    status: JobStatus::Queued,
                    created_at: *at,
                    updated_at: *at,
                    artifacts: BTreeMap::new(),
                };
                self.jobs.insert(job_id.clone(), job);
            }
            Event::StepEnqueued { job_id, step_index, attempt, at } => {
                if let Some(job) = self.jobs.get_mut(job_id) {
                    if let Some(step) = job.steps.get_mut(*step_index) {
                        step.status = StepStatus::Dispatched;
                        step.attempt = *attempt;
                        step.worker_id = None;
                    }
                    job.updated_at = *at;
                }
            }
            Event::StepStarted { job_id, step_index, attempt, worker_id, at } => {
                if let Some(job) = self.jobs.get_mut(job_id) {
                    if let Some(step) = job.steps.get_mut(*step_index) {
                        if step.attempt == *attempt && !step.status.is_terminal() {
                            step.status = StepStatus::Running;
                            step.worker_id = Some(worker_id.clone());
                            if job.status == JobStatus::Queued {
                                job.status = JobStatus::Running;
                            }
                        }
                    }
                    job.updated_at = *at;
                }
            }
            Event::StepFinished { job_id, step_index, attempt, result, at } => {
                if let Some(job) = self.jobs.get_mut(job_id) {
                    let step_count = job.steps.len();
                    if let Some(step) = job.steps.get_mut(*step_index) {
                        if step.status.is_terminal() || step.attempt != *attempt {
                            return; // duplicate or stale: journaled for audit, no effect
                        }
                        step.result = Some(result.clone());
                        match result {
                            StepResult::Succeeded { artifact, .. } => {
                                step.status = StepStatus::Succeeded;
                                if let Some(a) = artifact.clone() {
                                    job.artifacts.insert(*step_index, a);
                                }
                                if *step_index + 1 == step_count {
                                    job.status = JobStatus::Succeeded;
                                } else {
                                    // Predecessor artifacts flow into the
                                    // successor's params here, in apply, so
                                    // replay reconstructs identical params.
                                    let injected = inject_artifacts(job, *step_index);
                                    job.steps[*step_index + 1].params = injected;
                                }
                            }
                            StepResult::Failed { .. } => {
                                step.status = StepStatus::Failed;
                                job.status = JobStatus::Failed;
                            }
                        }
                        job.updated_at = *at;
                    }
                }
            }
            Event::StepLost { job_id, step_index, attempt, at } => {
                if let Some(job) = self.jobs.get_mut(job_id) {
                    if let Some(step) = job.steps.get_mut(*step_index) {
                        if step.attempt == *attempt && !step.status.is_terminal() {
                            step.status = StepStatus::Pending;
                            step.worker_id = None;
                        }
                    }
                    job.updated_at = *at;
                }
            }
            Event::JobCancelled { job_id, at } => {
                if let Some(job) = self.jobs.get_mut(job_id) {
                    if !job.status.is_terminal() {
                        job.status = JobStatus::Cancelled;
                        job.updated_at = *at;
                    }
                }
            }
        }
    }
}

/// Successor params after a successful step: the full artifact map so
/// far under "predecessor_artifacts", plus the conventional "image"
/// shortcut for reproduce-family steps.
fn inject_artifacts(job: &Job, finished_index: usize) -> serde_json::Value {
    let next = &job.steps[finished_index + 1];
    let mut params = next.params.clone();
    if !params.is_object() {
        params = serde_json::json!({});
    }
    let map = params.as_object_mut().expect("object params");
    let mut refs = serde_json::Map::new();
    for (idx, a) in &job.artifacts {
        refs.insert(idx.to_string(), serde_json::json!(a.artifact_id.clone()));
    }
    map.insert("predecessor_artifacts".into(), serde_json::Value::Object(refs));
    let reproduce_family = matches!(
        next.kind,
        StepKind::Reproduce | StepKind::ParallelReproduce | StepKind::CollectKernelLog
    );
    if reproduce_family && !map.contains_key("image") {
        if let Some(a) = job.artifacts.get(&finished_index) {
            map.insert("image".into(), serde_json::json!(a.artifact_id.clone()));
        }
    }
    serde_json::Value::Object(map.clone())
}

// ---------------------------------------------------------------------------
// Scheduler

pub struct Scheduler {
    journal: Journal,
    state: State,
    build_queue: InProcQueue,
    reproduce_queue: InProcQueue,
    clock: Arc<dyn Clock>,
    validator: Option<Box<dyn Fn(&StepSpec) -> Result<(), String> + Send>>,
}

impl Scheduler {
    /// Open (or create) a scheduler over the journal at `path`. Returns
    /// the scheduler with all journaled state replayed; call `recover`
    /// to make interrupted work dispatchable again.
    pub fn open(
        path: &Path,
        clock: Arc<dyn Clock>,
        visibility_timeout_ms: Millis,
    ) -> Result<Scheduler, SchedulerError> {
        let (journal, events) = Journal::recover(path)?;
        let mut state = State::default();
        for event in &events {
            state.apply(event);
        }
        Ok(Scheduler {
            journal,
            state,
            build_queue: InProcQueue::with_visibility_timeout("build", visibility_timeout_ms),
            reproduce_queue: InProcQueue::with_visibility_timeout(
                "reproduce",
                visibility_timeout_ms,
            ),
            clock,
            validator: None,
        })
    }

    /// Install step-param validation (the worker layer supplies one that
    /// understands each kind's spec).
    pub fn set_validator(
        &mut self,
        validator: Box<dyn Fn(&StepSpec) -> Result<(), String> + Send>,
    ) {
        self.validator = Some(validator);
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    fn record(&mut self, event: Event) -> Result<(), SchedulerError> {
        // Write-ahead: journal first, then apply.
        self.journal.append(&event)?;
        self.state.apply(&event);
        Ok(())
    }

    fn queue_for(&mut self, kind: StepKind) -> &mut InProcQueue {
        match kind.pool() {
            Pool::Build => &mut self.build_queue,
            Pool::Reproduce => &mut self.reproduce_queue,
        }
    }

    fn enqueue_step(&mut self, job_id: &str, step_index: usize, attempt: u32) -> Result<(), SchedulerError> {
        let at = self.clock.now();
        self.record(Event::StepEnqueued { job_id: job_id.into(), step_index, attempt, at })?;
        let job = &self.state.jobs[job_id];
        let step = &job.steps[step_index];
        let (kind, params) = (step.kind, step.params.clone());
        self.queue_for(kind).enqueue(job_id, step_index, attempt, kind, params);
        Ok(())
    }

    /// Submit with a generated UUID.
    pub fn submit_job(&mut self, steps: Vec<StepSpec>) -> Result<String, SchedulerError> {
        let job_id = Uuid::new_v4().to_string();
        self.submit_job_with_id(&job_id, steps)?;
        Ok(job_id)
    }

    /// Submit under a deterministic name → UUIDv5 job id. Resubmission
    /// of an existing name is idempotent and returns the stored job id.
    pub fn submit_named_job(
        &mut self,
        name: &str,
        steps: Vec<StepSpec>,
    ) -> Result<String, SchedulerError> {
        let job_id = Uuid::new_v5(&JOB_NAMESPACE, name.as_bytes()).to_string();
        if self.state.jobs.contains_key(&job_id) {
            return Ok(job_id);
        }
        self.submit_job_with_id(&job_id, steps)?;
        Ok(job_id)
    }

    fn submit_job_with_id(&mut self, job_id: &str, steps: Vec<StepSpec>) -> Result<(), SchedulerError> {
        if steps.is_empty() {
            return Err(SchedulerError::Validation("job has no steps".into()));
        }
        if let Some(validator) = &self.validator {
            for (i, step) in steps.iter().enumerate() {
                validator(step)
                    .map_err(|m| SchedulerError::Validation(format!("step {i}: {m}")))?;
            }
        }
        let at = self.clock.now();
        self.record(Event::JobSubmitted { job_id: job_id.into(), steps, at })?;
        self.enqueue_step(job_id, 0, 0)
    }

    pub fn query_status(&self, job_id: &str) -> Result<Job, SchedulerError> {
        self.state
            .jobs
            .get(job_id)
            .cloned()
            .ok_or_else(|| SchedulerError::UnknownJob(job_id.into()))
    }

    /// Next message for a worker pool; also journals the Running
    /// transition on behalf of the picking worker.
    pub fn dispatch(&mut self, pool: Pool, worker_id: &str) -> Result<Option<crate::queue::QueueMessage>, SchedulerError> {
        let now = self.clock.now();
        let queue = match pool {
            Pool::Build => &mut self.build_queue,
            Pool::Reproduce => &mut self.reproduce_queue,
        };
        let Some(msg) = queue.dequeue(now) else { return Ok(None) };
        // A message may outlive its usefulness (job finished via another
        // attempt); hand it out anyway — the result path ignores stale
        // envelopes — but skip the Running transition for terminal steps.
        let still_live = self
            .state
            .jobs
            .get(&msg.job_id)
            .and_then(|j| j.steps.get(msg.step_index))
            .is_some_and(|s| !s.status.is_terminal() && s.attempt == msg.attempt);
        if still_live {
            self.record(Event::StepStarted {
                job_id: msg.job_id.clone(),
                step_index: msg.step_index,
                attempt: msg.attempt,
                worker_id: worker_id.into(),
                at: now,
            })?;
        }
        Ok(Some(msg))
    }

    /// Record a worker's result. Duplicates and stale attempts are
    /// ignored (logged); success advances the job to its next step.
    pub fn handle_worker_result(&mut self, envelope: ResultEnvelope) -> Result<(), SchedulerError> {
        let job = self
            .state
            .jobs
            .get(&envelope.job_id)
            .ok_or_else(|| SchedulerError::UnknownJob(envelope.job_id.clone()))?;
        let step = job.steps.get(envelope.step_index).ok_or_else(|| {
            SchedulerError::UnknownJob(format!(
                "{} step {}",
                envelope.job_id, envelope.step_index
            ))
        })?;

        let queue = match step.kind.pool() {
            Pool::Build => &mut self.build_queue,
            Pool::Reproduce => &mut self.reproduce_queue,
        };
        queue.ack(&envelope.message_id);

        if step.status.is_terminal() {
            log::debug!(
                "duplicate result for {} step {} ignored",
                envelope.job_id,
                envelope.step_index
            );
            return Ok(());
        }
        if envelope.attempt < step.attempt {
            log::warn!(
                "stale attempt {} (current {}) for {} step {} ignored",
                envelope.attempt,
                step.attempt,
                envelope.job_id,
                envelope.step_index
            );
            return Ok(());
        }

        let success = envelope.result.is_success();
        let step_index = envelope.step_index;
        let step_count = job.steps.len();
        let at = self.clock.now();
        self.record(Event::StepFinished {
            job_id: envelope.job_id.clone(),
            step_index,
            attempt: envelope.attempt,
            result: envelope.result,
            at,
        })?;
        if success && step_index + 1 < step_count {
            self.enqueue_step(&envelope.job_id, step_index + 1, 0)?;
        }
        Ok(())
    }

    /// Reclaim expired deliveries: retry worker-loss up to
    /// `MAX_WORKER_LOSS_RETRIES`, then fail the step as infrastructure.
    pub fn tick(&mut self) -> Result<(), SchedulerError> {
        let now = self.clock.now();
        let mut lost: Vec<crate::queue::QueueMessage> = self.build_queue.reclaim_expired(now);
        lost.extend(self.reproduce_queue.reclaim_expired(now));
        for msg in lost {
            let Some(step) = self
                .state
                .jobs
                .get(&msg.job_id)
                .and_then(|j| j.steps.get(msg.step_index))
            else {
                continue;
            };
            if step.status.is_terminal() || step.attempt != msg.attempt {
                continue; // a result or a newer attempt overtook the expiry
            }
            self.record(Event::StepLost {
                job_id: msg.job_id.clone(),
                step_index: msg.step_index,
                attempt: msg.attempt,
                at: now,
            })?;
            if msg.attempt < MAX_WORKER_LOSS_RETRIES {
                self.enqueue_step(&msg.job_id, msg.step_index, msg.attempt + 1)?;
            } else {
                self.record(Event::StepFinished {
                    job_id: msg.job_id.clone(),
                    step_index: msg.step_index,
                    attempt: msg.attempt,
                    result: StepResult::Failed {
                        reason: format!(
                            "worker lost after {} attempts",
                            msg.attempt + 1
                        ),
                        infrastructure: true,
                    },
                    at: now,
                })?;
            }
        }
        Ok(())
    }

    /// Make interrupted work dispatchable again after a restart: the
    /// queues are volatile, so every step that was in flight is
    /// re-enqueued with attempt+1, and ready-but-never-dispatched steps
    /// are re-enqueued as they were. Returns the number of resumed steps.
    pub fn recover(&mut self) -> Result<usize, SchedulerError> {
        self.build_queue.clear();
        self.reproduce_queue.clear();
        let mut to_resume: Vec<(String, usize, u32)> = Vec::new();
        for job in self.state.jobs.values() {
            if job.status.is_terminal() {
                continue;
            }
            for (idx, step) in job.steps.iter().enumerate() {
                match step.status {
                    StepStatus::Dispatched | StepStatus::Running => {
                        to_resume.push((job.job_id.clone(), idx, step.attempt + 1));
                    }
                    StepStatus::Pending => {
                        let runnable = idx == 0
                            || job.steps[idx - 1].status == StepStatus::Succeeded;
                        if runnable {
                            to_resume.push((job.job_id.clone(), idx, step.attempt));
                        }
                    }
                    _ => {}
                }
            }
        }
        let resumed = to_resume.len();
        for (job_id, step_index, attempt) in to_resume {
            self.enqueue_step(&job_id, step_index, attempt)?;
        }
        Ok(resumed)
    }

    pub fn cancel_job(&mut self, job_id: &str) -> Result<(), SchedulerError> {
        if !self.state.jobs.contains_key(job_id) {
            return Err(SchedulerError::UnknownJob(job_id.into()));
        }
        let at = self.clock.now();
        self.record(Event::JobCancelled { job_id: job_id.into(), at })
    }

    /// Ready backlog depth across both pools.
    pub fn ready_messages(&self) -> usize {
        self.build_queue.ready_len() + self.reproduce_queue.ready_len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::SimClock;

    fn build_step() -> StepSpec {
        StepSpec { kind: StepKind::Build, params: serde_json::json!({"commit_id": "c"}) }
    }

    fn reproduce_step() -> StepSpec {
        StepSpec { kind: StepKind::Reproduce, params: serde_json::json!({}) }
    }

    fn open_scheduler(dir: &Path, clock: &SimClock) -> Scheduler {
        Scheduler::open(&dir.join("journal.jsonl"), Arc::new(clock.clone()), 30 * 60_000).unwrap()
    }

    fn succeed(result: serde_json::Value, artifact: Option<&str>) -> StepResult {
        StepResult::Succeeded { result, artifact: artifact.map(ArtifactRef::new) }
    }

    #[test]
    fn empty_job_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let clock = SimClock::new();
        let mut s = open_scheduler(dir.path(), &clock);
        assert!(matches!(s.submit_job(vec![]), Err(SchedulerError::Validation(_))));
    }

    #[test]
    fn two_step_job_runs_sequentially_with_artifact_injection() {
        let dir = tempfile::tempdir().unwrap();
        let clock = SimClock::new();
        let mut s = open_scheduler(dir.path(), &clock);
        let job_id = s.submit_job(vec![build_step(), reproduce_step()]).unwrap();

        let snap = s.query_status(&job_id).unwrap();
        assert_eq!(snap.status, JobStatus::Queued);
        assert_eq!(snap.steps[0].status, StepStatus::Dispatched);
        assert_eq!(snap.steps[1].status, StepStatus::Pending);

        // Reproduce pool is empty until the build succeeds.
        assert!(s.dispatch(Pool::Reproduce, "r-1").unwrap().is_none());
        let msg = s.dispatch(Pool::Build, "b-1").unwrap().unwrap();
        assert_eq!(s.query_status(&job_id).unwrap().steps[0].status, StepStatus::Running);

        s.handle_worker_result(ResultEnvelope {
            job_id: job_id.clone(),
            step_index: 0,
            attempt: 0,
            worker_id: "b-1".into(),
            message_id: msg.message_id.clone(),
            result: succeed(serde_json::json!({"ok": true}), Some("img-7")),
        })
        .unwrap();

        let snap = s.query_status(&job_id).unwrap();
        assert_eq!(snap.steps[0].status, StepStatus::Succeeded);
        assert_eq!(snap.steps[1].status, StepStatus::Dispatched);
        // The built image ref flowed into the reproduce params.
        assert_eq!(snap.steps[1].params["image"], "img-7");

        let msg2 = s.dispatch(Pool::Reproduce, "r-1").unwrap().unwrap();
        assert_eq!(msg2.payload["image"], "img-7");
        s.handle_worker_result(ResultEnvelope {
            job_id: job_id.clone(),
            step_index: 1,
            attempt: 0,
            worker_id: "r-1".into(),
            message_id: msg2.message_id,
            result: succeed(serde_json::json!({"crashed": false}), Some("log-1")),
        })
        .unwrap();

        let snap = s.query_status(&job_id).unwrap();
        assert_eq!(snap.status, JobStatus::Succeeded);
        assert_eq!(snap.artifacts.len(), 2);
    }

    #[test]
    fn duplicate_and_stale_results_are_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let clock = SimClock::new();
        let mut s = open_scheduler(dir.path(), &clock);
        let job_id = s.submit_job(vec![build_step()]).unwrap();
        let msg = s.dispatch(Pool::Build, "b-1").unwrap().unwrap();

        let envelope = ResultEnvelope {
            job_id: job_id.clone(),
            step_index: 0,
            attempt: 0,
            worker_id: "b-1".into(),
            message_id: msg.message_id.clone(),
            result: succeed(serde_json::json!(1), None),
        };
        s.handle_worker_result(envelope.clone()).unwrap();
        let before = s.query_status(&job_id).unwrap();

        // Duplicate succeeded envelope: no state change.
        s.handle_worker_result(envelope.clone()).unwrap();
        assert_eq!(s.query_status(&job_id).unwrap(), before);

        // A late Failed for the same step must not flip the outcome.
        let mut late = envelope;
        late.result = StepResult::Failed { reason: "late".into(), infrastructure: false };
        s.handle_worker_result(late).unwrap();
        assert_eq!(s.query_status(&job_id).unwrap(), before);

        // Unknown job errors.
        assert!(matches!(
            s.handle_worker_result(ResultEnvelope {
                job_id: "nope".into(),
                step_index: 0,
                attempt: 0,
                worker_id: "w".into(),
                message_id: "m".into(),
                result: succeed(serde_json::json!(1), None),
            }),
            Err(SchedulerError::UnknownJob(_))
        ));
    }

    #[test]
    fn reported_failure_fails_the_job_without_retry() {
        let dir = tempfile::tempdir().unwrap();
        let clock = SimClock::new();
        let mut s = open_scheduler(dir.path(), &clock);
        let job_id = s.submit_job(vec![build_step(), reproduce_step()]).unwrap();
        let msg = s.dispatch(Pool::Build, "b-1").unwrap().unwrap();
        s.handle_worker_result(ResultEnvelope {
            job_id: job_id.clone(),
            step_index: 0,
            attempt: 0,
            worker_id: "b-1".into(),
            message_id: msg.message_id,
            result: StepResult::Failed { reason: "compile error".into(), infrastructure: false },
        })
        .unwrap();
        let snap = s.query_status(&job_id).unwrap();
        assert_eq!(snap.status, JobStatus::Failed);
        assert_eq!(snap.steps[1].status, StepStatus::Pending);
        assert_eq!(s.ready_messages(), 0);
    }

    #[test]
    fn worker_loss_retries_twice_then_fails_as_infrastructure() {
        let dir = tempfile::tempdir().unwrap();
        let clock = SimClock::new();
        let mut s = open_scheduler(dir.path(), &clock);
        let visibility = 30 * 60_000;
        let job_id = s.submit_job(vec![build_step()]).unwrap();

        for expected_attempt in 0..=MAX_WORKER_LOSS_RETRIES {
            let msg = s.dispatch(Pool::Build, "b-1").unwrap().unwrap();
            assert_eq!(msg.attempt, expected_attempt);
            clock.advance_to(clock.now() + visibility + 1);
            s.tick().unwrap();
        }
        let snap = s.query_status(&job_id).unwrap();
        assert_eq!(snap.status, JobStatus::Failed);
        match snap.steps[0].result.as_ref().unwrap() {
            StepResult::Failed { infrastructure, .. } => assert!(infrastructure),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn restart_replays_to_the_same_snapshot_and_recover_counts_steps() {
        let dir = tempfile::tempdir().unwrap();
        let clock = SimClock::new();
        let path = dir.path().join("journal.jsonl");
        let (job_a, job_b, snap_a);
        {
            let mut s =
                Scheduler::open(&path, Arc::new(clock.clone()), 30 * 60_000).unwrap();
            job_a = s.submit_job(vec![build_step(), reproduce_step()]).unwrap();
            job_b = s.submit_job(vec![build_step()]).unwrap();
            let msg = s.dispatch(Pool::Build, "b-1").unwrap().unwrap();
            assert_eq!(msg.job_id, job_a);
            s.handle_worker_result(ResultEnvelope {
                job_id: job_a.clone(),
                step_index: 0,
                attempt: 0,
                worker_id: "b-1".into(),
                message_id: msg.message_id,
                result: succeed(serde_json::json!(1), Some("img-1")),
            })
            .unwrap();
            // job_a step 1 enqueued; job_b step 0 enqueued; crash here.
            let _ = s.dispatch(Pool::Build, "b-2").unwrap().unwrap(); // job_b in flight
            snap_a = s.query_status(&job_a).unwrap();
        }

        let mut s = Scheduler::open(&path, Arc::new(clock.clone()), 30 * 60_000).unwrap();
        // Same snapshot after mid-pipeline restart.
        assert_eq!(s.query_status(&job_a).unwrap(), snap_a);
        // job_a reproduce step (Dispatched, never picked) + job_b build
        // step (Running at crash) are both resumable.
        let resumed = s.recover().unwrap();
        assert_eq!(resumed, 2);
        let b = s.query_status(&job_b).unwrap();
        assert_eq!(b.steps[0].attempt, 1, "in-flight step resumes with attempt+1");
        assert_eq!(s.query_status(&job_a).unwrap().steps[1].attempt, 1);

        // Empty store recovers zero.
        let dir2 = tempfile::tempdir().unwrap();
        let mut fresh = open_scheduler(dir2.path(), &clock);
        assert_eq!(fresh.recover().unwrap(), 0);
    }
}
