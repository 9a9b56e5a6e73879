//! Runtimes that drive the scheduler with real workers.
//!
//! `SimRuntime` is a discrete-event loop over a virtual clock: workers
//! occupy capacity slots for the simulated duration of each step, so
//! scheduling behavior over "24 hours" runs in milliseconds and is
//! fully deterministic. `LocalRuntime` runs the same workers on real
//! threads against the wall clock for embedded CLI use. Both speak to
//! the scheduler purely through queue messages and result envelopes.

use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::artifacts::{ArtifactError, ArtifactRef, ArtifactStore};
use crate::builder::{BuildSpec, Builder, MockBackend};
use crate::clock::{Clock, Millis, SimClock, SystemClock, MINUTE_MS};
use crate::queue::{QueueMessage, DEFAULT_VISIBILITY_TIMEOUT_MS};
use crate::reproducer::{ReproduceError, ReproduceSpec, ReproduceWorker};
use crate::scheduler::{
    Job, Pool, ResultEnvelope, Scheduler, SchedulerError, StepKind, StepResult, StepSpec,
};

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
    #[error(transparent)]
    Artifacts(#[from] ArtifactError),
    #[error("worker setup: {0}")]
    WorkerSetup(#[from] ReproduceError),
    #[error("job {0} cannot make progress (no worker for its pool?)")]
    Stalled(String),
    #[error("timed out waiting for job {0}")]
    WaitTimeout(String),
}

/// Simulated wall-cost of the steps the mock backends execute
/// instantly. Build time defaults to the observed real-world compile
/// cost; tests override it.
#[derive(Debug, Clone, Copy)]
pub struct SimCosts {
    pub build_ms: Millis,
    pub utility_ms: Millis,
}

impl Default for SimCosts {
    fn default() -> SimCosts {
        SimCosts { build_ms: 15 * MINUTE_MS, utility_ms: 1_000 }
    }
}

impl SimCosts {
    /// Every step bounded by two simulated minutes.
    pub fn fast() -> SimCosts {
        SimCosts { build_ms: 2 * MINUTE_MS, utility_ms: 1_000 }
    }
}

pub struct StepOutcome {
    pub result: StepResult,
    pub sim_duration_ms: Millis,
}

/// Reproduce seeds default to a hash of the job id, so re-running the
/// same named job replays identical VM draws.
pub fn seed_for_job(job_id: &str) -> u64 {
    let digest = Sha256::digest(job_id.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Step-param validation installed into the scheduler: shape checks
/// only, since fields like `image` legitimately arrive later via
/// artifact injection.
pub fn validate_step(spec: &StepSpec) -> Result<(), String> {
    let Some(obj) = spec.params.as_object() else {
        return Err("params must be a JSON object".into());
    };
    let string_field = |key: &str| -> Result<(), String> {
        match obj.get(key) {
            Some(v) if v.is_string() => Ok(()),
            Some(_) => Err(format!("{key} must be a string")),
            None => Err(format!("missing {key}")),
        }
    };
    match spec.kind {
        StepKind::Build => {
            serde_json::from_value::<BuildSpec>(spec.params.clone())
                .map(|_| ())
                .map_err(|e| e.to_string())
        }
        StepKind::Reproduce | StepKind::ParallelReproduce => {
            if let Some(t) = obj.get("timeout_minutes") {
                if t.as_u64().is_none_or(|v| v == 0) {
                    return Err("timeout_minutes must be a positive integer".into());
                }
            }
            if let Some(m) = obj.get("vm_count") {
                if m.as_u64().is_none_or(|v| v == 0) {
                    return Err("vm_count must be a positive integer".into());
                }
            }
            match obj.get("reproducer") {
                Some(r) if r.is_object() => Ok(()),
                Some(_) => Err("reproducer must be an object".into()),
                None => Err("missing reproducer".into()),
            }
        }
        StepKind::RetrieveFile => {
            string_field("git_url")?;
            string_field("commit_id")?;
            string_field("path")
        }
        StepKind::CollectKernelLog => Ok(()),
    }
}

// ---------------------------------------------------------------------------
// The worker

/// One worker process-equivalent: owns a private git cache and scratch
/// space, shares only the artifact store directory.
pub struct PlatformWorker {
    builder: Builder<MockBackend>,
    reproducer: ReproduceWorker,
    costs: SimCosts,
}

impl PlatformWorker {
    pub fn new(home: &Path, worker_id: &str, costs: SimCosts) -> Result<PlatformWorker, RuntimeError> {
        let artifacts = ArtifactStore::open(&home.join("artifacts"))?;
        let reproducer = ReproduceWorker::new(
            ArtifactStore::open(&home.join("artifacts"))?,
            &home.join("scratch").join(worker_id),
        )?;
        Ok(PlatformWorker { builder: Builder::new(artifacts, MockBackend), reproducer, costs })
    }

    pub fn execute(&mut self, msg: &QueueMessage) -> StepOutcome {
        match msg.kind {
            StepKind::Build => self.execute_build(msg),
            StepKind::Reproduce | StepKind::ParallelReproduce => self.execute_reproduce(msg),
            StepKind::RetrieveFile => self.execute_retrieve(msg),
            StepKind::CollectKernelLog => self.execute_collect(msg),
        }
    }

    fn execute_build(&mut self, msg: &QueueMessage) -> StepOutcome {
        let spec: BuildSpec = match serde_json::from_value(msg.payload.clone()) {
            Ok(s) => s,
            Err(e) => return self.fail(format!("invalid build params: {e}"), false),
        };
        match self.builder.build(&spec) {
            Ok(image) => StepOutcome {
                result: StepResult::Succeeded {
                    result: serde_json::to_value(&image).expect("image serializes"),
                    artifact: Some(ArtifactRef::new(&image.artifact_id)),
                },
                sim_duration_ms: self.costs.build_ms,
            },
            Err(e) => {
                let infrastructure = e.is_infrastructure();
                StepOutcome {
                    result: StepResult::Failed { reason: e.to_string(), infrastructure },
                    sim_duration_ms: self.costs.build_ms,
                }
            }
        }
    }

    fn execute_reproduce(&mut self, msg: &QueueMessage) -> StepOutcome {
        let mut params = msg.payload.clone();
        if let Some(obj) = params.as_object_mut() {
            if !obj.contains_key("seed") {
                obj.insert("seed".into(), serde_json::json!(seed_for_job(&msg.job_id)));
            }
            match msg.kind {
                StepKind::Reproduce => {
                    obj.insert("vm_count".into(), serde_json::json!(1));
                }
                StepKind::ParallelReproduce => {
                    obj.entry("vm_count".to_string()).or_insert(serde_json::json!(4));
                }
                _ => {}
            }
        }
        let spec: ReproduceSpec = match serde_json::from_value(params) {
            Ok(s) => s,
            Err(e) => return self.fail(format!("invalid reproduce params: {e}"), false),
        };
        let run = match msg.kind {
            StepKind::Reproduce => self.reproducer.reproduce_once(&spec),
            _ => self.reproducer.parallel_reproduce(&spec),
        };
        match run {
            Ok(result) => {
                let sim_duration_ms = (result.elapsed_seconds * 1_000.0).round() as Millis;
                StepOutcome {
                    result: StepResult::Succeeded {
                        artifact: result.kernel_log_ref.clone(),
                        result: serde_json::to_value(&result).expect("result serializes"),
                    },
                    sim_duration_ms,
                }
            }
            Err(e) => {
                let infrastructure = e.is_infrastructure();
                self.fail_with(e.to_string(), infrastructure, self.costs.utility_ms)
            }
        }
    }

    fn execute_retrieve(&mut self, msg: &QueueMessage) -> StepOutcome {
        let get = |k: &str| msg.payload.get(k).and_then(|v| v.as_str()).map(str::to_string);
        let (Some(url), Some(commit), Some(path)) =
            (get("git_url"), get("commit_id"), get("path"))
        else {
            return self.fail("retrieve-file params need git_url, commit_id, path".into(), false);
        };
        match self.builder.retrieve_file(&url, &commit, &path) {
            Ok(Some(content)) => StepOutcome {
                result: StepResult::Succeeded {
                    result: serde_json::json!({"path": path, "content": content}),
                    artifact: None,
                },
                sim_duration_ms: self.costs.utility_ms,
            },
            Ok(None) => self.fail(format!("no file {path} at {commit}"), false),
            Err(e) => {
                let infrastructure = e.is_infrastructure();
                self.fail_with(e.to_string(), infrastructure, self.costs.utility_ms)
            }
        }
    }

    fn execute_collect(&mut self, msg: &QueueMessage) -> StepOutcome {
        // Explicit `source`, or the predecessor's artifact (a reproduce
        // step's artifact is its kernel log).
        let source = msg
            .payload
            .get("source")
            .or_else(|| msg.payload.get("image"))
            .and_then(|v| v.as_str())
            .map(str::to_string);
        let Some(id) = source else {
            return self.fail("collect-kernel-log needs a source artifact".into(), false);
        };
        let artifact = ArtifactRef::new(&id);
        if self.reproducer.artifacts().exists(&artifact) {
            StepOutcome {
                result: StepResult::Succeeded {
                    result: serde_json::json!({"log": id}),
                    artifact: Some(artifact),
                },
                sim_duration_ms: self.costs.utility_ms,
            }
        } else {
            self.fail_with(format!("log artifact {id} unavailable"), true, self.costs.utility_ms)
        }
    }

    fn fail(&self, reason: String, infrastructure: bool) -> StepOutcome {
        self.fail_with(reason, infrastructure, self.costs.utility_ms)
    }

    fn fail_with(&self, reason: String, infrastructure: bool, sim_duration_ms: Millis) -> StepOutcome {
        StepOutcome { result: StepResult::Failed { reason, infrastructure }, sim_duration_ms }
    }
}

// ---------------------------------------------------------------------------
// Shared runner interface

/// What curation and resolution need from a runtime.
pub trait JobRunner {
    fn submit_named(&mut self, name: &str, steps: Vec<StepSpec>) -> Result<String, RuntimeError>;
    fn run_to_completion(&mut self, job_id: &str) -> Result<Job, RuntimeError>;
    fn artifacts(&self) -> &ArtifactStore;
}

// ---------------------------------------------------------------------------
// Discrete-event simulation

struct SimSlot {
    worker_id: String,
    pool: Pool,
    busy_until: Option<Millis>,
    pending: Option<ResultEnvelope>,
}

pub struct SimRuntime {
    clock: SimClock,
    scheduler: Scheduler,
    slots: Vec<SimSlot>,
    workers: Vec<PlatformWorker>,
    artifacts: ArtifactStore,
    /// Steps made dispatchable again by recovery at open.
    pub resumed: usize,
}

impl SimRuntime {
    pub fn open(
        home: &Path,
        build_workers: usize,
        reproduce_workers: usize,
        costs: SimCosts,
    ) -> Result<SimRuntime, RuntimeError> {
        let clock = SimClock::new();
        let mut scheduler = Scheduler::open(
            &home.join("store").join("journal.jsonl"),
            Arc::new(clock.clone()),
            DEFAULT_VISIBILITY_TIMEOUT_MS,
        )?;
        scheduler.set_validator(Box::new(validate_step));
        // Resume the virtual clock past everything already journaled.
        let max_at = scheduler.state().jobs.values().map(|j| j.updated_at).max().unwrap_or(0);
        clock.advance_to(max_at);
        let resumed = scheduler.recover()?;

        let mut slots = Vec::new();
        let mut workers = Vec::new();
        for i in 0..build_workers {
            let worker_id = format!("build-{i}");
            workers.push(PlatformWorker::new(home, &worker_id, costs)?);
            slots.push(SimSlot { worker_id, pool: Pool::Build, busy_until: None, pending: None });
        }
        for i in 0..reproduce_workers {
            let worker_id = format!("repro-{i}");
            workers.push(PlatformWorker::new(home, &worker_id, costs)?);
            slots.push(SimSlot {
                worker_id,
                pool: Pool::Reproduce,
                busy_until: None,
                pending: None,
            });
        }
        let artifacts = ArtifactStore::open(&home.join("artifacts"))?;
        Ok(SimRuntime { clock, scheduler, slots, workers, artifacts, resumed })
    }

    pub fn clock(&self) -> &SimClock {
        &self.clock
    }

    pub fn scheduler(&self) -> &Scheduler {
        &self.scheduler
    }

    pub fn scheduler_mut(&mut self) -> &mut Scheduler {
        &mut self.scheduler
    }

    pub fn submit_job(&mut self, steps: Vec<StepSpec>) -> Result<String, RuntimeError> {
        Ok(self.scheduler.submit_job(steps)?)
    }

    /// One scheduling round: deliver due results, reclaim expiries,
    /// hand work to idle slots, else advance the clock to the next
    /// completion. `false` means the system is fully idle.
    fn step_once(&mut self) -> Result<bool, RuntimeError> {
        let now = self.clock.now();
        let mut acted = false;
        for slot in self.slots.iter_mut() {
            if slot.busy_until.is_some_and(|t| t <= now) {
                let envelope = slot.pending.take().expect("busy slot has a pending result");
                slot.busy_until = None;
                self.scheduler.handle_worker_result(envelope)?;
                acted = true;
            }
        }
        self.scheduler.tick()?;
        for i in 0..self.slots.len() {
            if self.slots[i].busy_until.is_none() {
                let pool = self.slots[i].pool;
                let worker_id = self.slots[i].worker_id.clone();
                if let Some(msg) = self.scheduler.dispatch(pool, &worker_id)? {
                    let outcome = self.workers[i].execute(&msg);
                    self.slots[i].busy_until = Some(now + outcome.sim_duration_ms.max(1));
                    self.slots[i].pending = Some(ResultEnvelope {
                        job_id: msg.job_id.clone(),
                        step_index: msg.step_index,
                        attempt: msg.attempt,
                        worker_id,
                        message_id: msg.message_id,
                        result: outcome.result,
                    });
                    acted = true;
                }
            }
        }
        if acted {
            return Ok(true);
        }
        match self.slots.iter().filter_map(|s| s.busy_until).min() {
            Some(t) => {
                self.clock.advance_to(t);
                Ok(true)
            }
            None => Ok(false),
        }
    }

    /// Run until no work remains anywhere.
    pub fn run_until_idle(&mut self) -> Result<(), RuntimeError> {
        while self.step_once()? {}
        Ok(())
    }

    /// Run until the virtual clock reaches `deadline` or nothing is
    /// left to do. The clock only moves by step completions, so it may
    /// finish slightly past the deadline.
    pub fn run_until(&mut self, deadline: Millis) -> Result<(), RuntimeError> {
        while self.clock.now() < deadline && self.step_once()? {}
        Ok(())
    }
}

impl JobRunner for SimRuntime {
    fn submit_named(&mut self, name: &str, steps: Vec<StepSpec>) -> Result<String, RuntimeError> {
        Ok(self.scheduler.submit_named_job(name, steps)?)
    }

    fn run_to_completion(&mut self, job_id: &str) -> Result<Job, RuntimeError> {
        loop {
            let job = self.scheduler.query_status(job_id)?;
            if job.status.is_terminal() {
                return Ok(job);
            }
            if !self.step_once()? {
                return Err(RuntimeError::Stalled(job_id.to_string()));
            }
        }
    }

    fn artifacts(&self) -> &ArtifactStore {
        &self.artifacts
    }
}

// ---------------------------------------------------------------------------
// Threaded local runtime

pub struct LocalRuntime {
    scheduler: Arc<Mutex<Scheduler>>,
    clock: Arc<SystemClock>,
    artifacts: ArtifactStore,
    stop: Arc<AtomicBool>,
    handles: Vec<JoinHandle<()>>,
    pub resumed: usize,
}

impl LocalRuntime {
    pub fn open(
        home: &Path,
        build_workers: usize,
        reproduce_workers: usize,
    ) -> Result<LocalRuntime, RuntimeError> {
        let clock = Arc::new(SystemClock);
        let mut scheduler = Scheduler::open(
            &home.join("store").join("journal.jsonl"),
            clock.clone(),
            DEFAULT_VISIBILITY_TIMEOUT_MS,
        )?;
        scheduler.set_validator(Box::new(validate_step));
        let resumed = scheduler.recover()?;
        let scheduler = Arc::new(Mutex::new(scheduler));
        let stop = Arc::new(AtomicBool::new(false));

        let mut handles = Vec::new();
        let spawn_pool = |pool: Pool, count: usize, handles: &mut Vec<JoinHandle<()>>| {
            for i in 0..count {
                let worker_id = match pool {
                    Pool::Build => format!("build-{i}"),
                    Pool::Reproduce => format!("repro-{i}"),
                };
                let scheduler = Arc::clone(&scheduler);
                let stop = Arc::clone(&stop);
                let home = home.to_path_buf();
                handles.push(std::thread::spawn(move || {
                    let mut worker =
                        match PlatformWorker::new(&home, &worker_id, SimCosts::default()) {
                            Ok(w) => w,
                            Err(e) => {
                                log::error!("worker {worker_id} failed to start: {e}");
                                return;
                            }
                        };
                    while !stop.load(Ordering::Relaxed) {
                        let msg = {
                            let mut s = scheduler.lock().expect("scheduler lock");
                            match s.dispatch(pool, &worker_id) {
                                Ok(m) => m,
                                Err(e) => {
                                    log::error!("dispatch: {e}");
                                    None
                                }
                            }
                        };
                        match msg {
                            Some(msg) => {
                                // Execute outside the lock.
                                let outcome = worker.execute(&msg);
                                let envelope = ResultEnvelope {
                                    job_id: msg.job_id.clone(),
                                    step_index: msg.step_index,
                                    attempt: msg.attempt,
                                    worker_id: worker_id.clone(),
                                    message_id: msg.message_id,
                                    result: outcome.result,
                                };
                                let mut s = scheduler.lock().expect("scheduler lock");
                                if let Err(e) = s.handle_worker_result(envelope) {
                                    log::error!("result delivery: {e}");
                                }
                            }
                            None => std::thread::sleep(std::time::Duration::from_millis(5)),
                        }
                    }
                }));
            }
        };
        spawn_pool(Pool::Build, build_workers, &mut handles);
        spawn_pool(Pool::Reproduce, reproduce_workers, &mut handles);

        let artifacts = ArtifactStore::open(&home.join("artifacts"))?;
        Ok(LocalRuntime { scheduler, clock, artifacts, stop, handles, resumed })
    }

    pub fn submit_job(&self, steps: Vec<StepSpec>) -> Result<String, RuntimeError> {
        Ok(self.scheduler.lock().expect("scheduler lock").submit_job(steps)?)
    }

    pub fn query_status(&self, job_id: &str) -> Result<Job, RuntimeError> {
        Ok(self.scheduler.lock().expect("scheduler lock").query_status(job_id)?)
    }

    /// Poll until the job is terminal or `timeout_ms` of wall time pass.
    pub fn wait(&self, job_id: &str, timeout_ms: Millis) -> Result<Job, RuntimeError> {
        let deadline = self.clock.now() + timeout_ms;
        loop {
            {
                let mut s = self.scheduler.lock().expect("scheduler lock");
                s.tick()?;
                let job = s.query_status(job_id)?;
                if job.status.is_terminal() {
                    return Ok(job);
                }
            }
            if self.clock.now() >= deadline {
                return Err(RuntimeError::WaitTimeout(job_id.to_string()));
            }
            std::thread::sleep(std::time::Duration::from_millis(5));
        }
    }
}

impl JobRunner for LocalRuntime {
    fn submit_named(&mut self, name: &str, steps: Vec<StepSpec>) -> Result<String, RuntimeError> {
        Ok(self.scheduler.lock().expect("scheduler lock").submit_named_job(name, steps)?)
    }

    fn run_to_completion(&mut self, job_id: &str) -> Result<Job, RuntimeError> {
        self.wait(job_id, 5 * MINUTE_MS)
    }

    fn artifacts(&self) -> &ArtifactStore {
        &self.artifacts
    }
}

impl Drop for LocalRuntime {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        for handle in self.handles.drain(..) {
            let _ = handle.join();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gitstore::{RepoCommit, RepoFile};
    use crashgym_core::model::{Reproducer, ReproducerKind};
    use std::collections::BTreeMap;

    fn write_repo(home: &Path) -> String {
        let repo = RepoFile {
            commits: vec![RepoCommit {
                id: "c-bug".into(),
                parents: vec![],
                tree: BTreeMap::from([
                    ("Makefile".into(), "all: vmlinux\n".into()),
                    (
                        "drivers/mock/dev.c".into(),
                        "static int probe(void) {\n\
                         \t// BUG(rep-9): {\"crash_probability\": 1.0, \"crash_delay_s\": 25.0, \"crash_title\": \"KASAN: slab-out-of-bounds Write in probe\", \"frames\": [\"probe+0x40/0x1f0 drivers/mock/dev.c:2\"]}\n\
                         \treturn 0;\n\
                         }\n"
                            .into(),
                    ),
                ]),
            }],
        };
        let path = home.join("repo.json");
        std::fs::write(&path, serde_json::to_string_pretty(&repo).unwrap()).unwrap();
        path.to_string_lossy().into_owned()
    }

    fn pair_steps(url: &str, rep: &str, timeout_minutes: u32) -> Vec<StepSpec> {
        vec![
            StepSpec {
                kind: StepKind::Build,
                params: serde_json::json!({"git_url": url, "commit_id": "c-bug"}),
            },
            StepSpec {
                kind: StepKind::Reproduce,
                params: serde_json::json!({
                    "reproducer": Reproducer::from_bytes(ReproducerKind::MockScript, rep.as_bytes()),
                    "timeout_minutes": timeout_minutes,
                }),
            },
        ]
    }

    #[test]
    fn sim_pipeline_builds_then_reproduces_with_injection() {
        let home = tempfile::tempdir().unwrap();
        let url = write_repo(home.path());
        let mut rt = SimRuntime::open(home.path(), 1, 1, SimCosts::default()).unwrap();
        let job_id = rt.submit_named("pair-1", pair_steps(&url, "rep-9", 10)).unwrap();
        let job = rt.run_to_completion(&job_id).unwrap();

        assert_eq!(job.status, crate::scheduler::JobStatus::Succeeded);
        assert_eq!(job.artifacts.len(), 2, "image + kernel log");
        let reproduce_result = match job.steps[1].result.as_ref().unwrap() {
            StepResult::Succeeded { result, .. } => result.clone(),
            other => panic!("unexpected {other:?}"),
        };
        assert_eq!(reproduce_result["crashed"], true);
        assert_eq!(
            reproduce_result["crash"]["crash_title"],
            "KASAN: slab-out-of-bounds Write in probe"
        );
        // 15 sim-minutes build + 25s (quantized) reproduce.
        assert_eq!(rt.clock().now(), 15 * MINUTE_MS + 25_000);
    }

    #[test]
    fn sim_seed_is_stable_per_job_name() {
        let home = tempfile::tempdir().unwrap();
        let url = write_repo(home.path());
        let run = |home: &Path| {
            let mut rt = SimRuntime::open(home, 1, 1, SimCosts::fast()).unwrap();
            let job_id = rt.submit_named("pair-seeded", pair_steps(&url, "rep-9", 10)).unwrap();
            let job = rt.run_to_completion(&job_id).unwrap();
            serde_json::to_string(&job.steps[1].result).unwrap()
        };
        let a = run(&home.path().join("a"));
        std::fs::copy(&url, home.path().join("b-repo.json")).ok();
        let b = run(&home.path().join("b"));
        assert_eq!(a, b, "same job name, same draws, same result");
    }

    #[test]
    fn sim_survives_kill_and_recover_mid_pipeline() {
        let home = tempfile::tempdir().unwrap();
        let url = write_repo(home.path());
        let uninterrupted = {
            let side = home.path().join("control");
            let mut rt = SimRuntime::open(&side, 4, 4, SimCosts::fast()).unwrap();
            let ids: Vec<String> = (0..6)
                .map(|i| {
                    rt.submit_named(&format!("pair-{i}"), pair_steps(&url, "rep-9", 2)).unwrap()
                })
                .collect();
            rt.run_until_idle().unwrap();
            ids.iter().map(|id| rt.scheduler().query_status(id).unwrap().status).collect::<Vec<_>>()
        };

        let side = home.path().join("victim");
        let ids: Vec<String>;
        {
            let mut rt = SimRuntime::open(&side, 4, 4, SimCosts::fast()).unwrap();
            ids = (0..6)
                .map(|i| {
                    rt.submit_named(&format!("pair-{i}"), pair_steps(&url, "rep-9", 2)).unwrap()
                })
                .collect();
            // Run only partway into the first builds, then "crash".
            rt.run_until(MINUTE_MS).unwrap();
        }
        let mut rt = SimRuntime::open(&side, 4, 4, SimCosts::fast()).unwrap();
        assert!(rt.resumed > 0, "interrupted steps must be re-enqueued");
        rt.run_until_idle().unwrap();
        let after: Vec<_> =
            ids.iter().map(|id| rt.scheduler().query_status(id).unwrap().status).collect();
        assert_eq!(after, uninterrupted);
    }

    #[test]
    fn sim_throughput_smoke_with_fast_costs() {
        let home = tempfile::tempdir().unwrap();
        let url = write_repo(home.path());
        let mut rt = SimRuntime::open(home.path(), 10, 10, SimCosts::fast()).unwrap();
        for i in 0..40 {
            rt.submit_named(&format!("pair-{i}"), pair_steps(&url, "rep-9", 2)).unwrap();
        }
        rt.run_until_idle().unwrap();
        let jobs = &rt.scheduler().state().jobs;
        assert_eq!(jobs.len(), 40);
        assert!(jobs.values().all(|j| j.status == crate::scheduler::JobStatus::Succeeded));
        // 40 pairs over 10+10 workers at ≤2 sim-minutes per step.
        assert!(rt.clock().now() <= 30 * MINUTE_MS, "took {} ms", rt.clock().now());
    }

    #[test]
    fn local_runtime_runs_a_job_on_threads() {
        let home = tempfile::tempdir().unwrap();
        let url = write_repo(home.path());
        let rt = LocalRuntime::open(home.path(), 2, 2).unwrap();
        let job_id = rt.submit_job(pair_steps(&url, "rep-9", 10)).unwrap();
        let job = rt.wait(&job_id, 30_000).unwrap();
        assert_eq!(job.status, crate::scheduler::JobStatus::Succeeded);
        assert_eq!(job.artifacts.len(), 2);
    }

    #[test]
    fn validator_rejects_malformed_submissions() {
        let home = tempfile::tempdir().unwrap();
        let mut rt = SimRuntime::open(home.path(), 1, 1, SimCosts::fast()).unwrap();
        let bad = vec![StepSpec { kind: StepKind::Build, params: serde_json::json!({}) }];
        assert!(matches!(
            rt.submit_job(bad),
            Err(RuntimeError::Scheduler(SchedulerError::Validation(_)))
        ));
        let bad_reproduce = vec![StepSpec {
            kind: StepKind::Reproduce,
            params: serde_json::json!({"reproducer": {"kind": "mock-script", "data": ""}, "timeout_minutes": 0}),
        }];
        assert!(matches!(
            rt.submit_job(bad_reproduce),
            Err(RuntimeError::Scheduler(SchedulerError::Validation(_)))
        ));
    }
}
