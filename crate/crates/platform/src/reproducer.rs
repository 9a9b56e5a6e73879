//! The reproduce worker: boots an image, runs the reproducer, watches
//! the console for crash signatures within a time budget, and fans out
//! to M replicated VMs for flaky bugs — first crash wins.
//!
//! Against mock images, a "VM" is a seeded draw from the behavior
//! script the builder baked in: boot outcome, crash outcome, and crash
//! delay. The console is synthesized to a scratch file line by line and
//! collected into an artifact as a stream, so a multi-hundred-thousand
//! line log never sits in memory; only the small crash window does.

use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};

use crashgym_core::crash::{CrashReport, DETECTOR_PREFIXES};
use crashgym_core::model::Reproducer;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifacts::{ArtifactError, ArtifactRef, ArtifactStore};
use crate::builder::{BehaviorScript, MockImage};

/// Console polling cadence; elapsed times quantize up to this.
pub const POLL_INTERVAL_S: f64 = 0.5;

pub const DEFAULT_TIMEOUT_MINUTES: u32 = 10;

fn default_timeout() -> u32 {
    DEFAULT_TIMEOUT_MINUTES
}

fn default_vm_count() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproduceSpec {
    pub image: ArtifactRef,
    pub reproducer: Reproducer,
    #[serde(default = "default_timeout")]
    pub timeout_minutes: u32,
    #[serde(default = "default_vm_count")]
    pub vm_count: usize,
    /// Seeds the per-VM random draws; callers derive it from the job id
    /// so reruns reproduce byte-identically.
    #[serde(default)]
    pub seed: u64,
}

impl ReproduceSpec {
    pub fn validate(&self) -> Result<(), ReproduceError> {
        if self.timeout_minutes == 0 {
            return Err(ReproduceError::InvalidSpec("timeout_minutes must be > 0".into()));
        }
        if self.vm_count == 0 {
            return Err(ReproduceError::InvalidSpec("vm_count must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproduceResult {
    pub crashed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crash: Option<CrashReport>,
    pub elapsed_seconds: f64,
    pub vm_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_log_ref: Option<ArtifactRef>,
}

#[derive(Debug, Error)]
pub enum ReproduceError {
    #[error("invalid reproduce spec: {0}")]
    InvalidSpec(String),
    #[error("artifact missing: {0}")]
    ArtifactMissing(String),
    #[error("boot failure: {0}")]
    BootFailure(String),
    #[error("kernel log unavailable: {0}")]
    LogUnavailable(String),
    #[error(transparent)]
    Storage(#[from] ArtifactError),
}

impl ReproduceError {
    pub fn is_infrastructure(&self) -> bool {
        !matches!(self, ReproduceError::InvalidSpec(_))
    }
}

/// One VM's fate, fully determined by (seed, vm_index).
#[derive(Debug, Clone, Copy)]
struct VmSample {
    boot_ok: bool,
    crashes: bool,
    delay_s: f64,
}

fn sample_vm(image: &MockImage, script: Option<&BehaviorScript>, seed: u64, vm_index: usize) -> VmSample {
    let salt = (vm_index as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt);
    let boot_ok = rng.gen::<f64>() >= image.boot_failure_probability;
    let (crashes, delay_s) = match script {
        Some(s) => (rng.gen::<f64>() < s.crash_probability, s.crash_delay_s),
        None => (false, 0.0),
    };
    VmSample { boot_ok, crashes, delay_s }
}

fn quantize_up(seconds: f64) -> f64 {
    (seconds / POLL_INTERVAL_S).ceil() * POLL_INTERVAL_S
}

pub struct ReproduceWorker {
    artifacts: ArtifactStore,
    scratch: PathBuf,
}

impl ReproduceWorker {
    pub fn new(artifacts: ArtifactStore, scratch: &Path) -> Result<ReproduceWorker, ReproduceError> {
        std::fs::create_dir_all(scratch).map_err(|e| {
            ReproduceError::LogUnavailable(format!("scratch {}: {e}", scratch.display()))
        })?;
        Ok(ReproduceWorker { artifacts, scratch: scratch.to_path_buf() })
    }

    /// Single-VM run; the spec must say `vm_count: 1`.
    pub fn reproduce_once(&self, spec: &ReproduceSpec) -> Result<ReproduceResult, ReproduceError> {
        if spec.vm_count != 1 {
            return Err(ReproduceError::InvalidSpec("reproduce_once requires vm_count = 1".into()));
        }
        self.run(spec)
    }

    /// M replicated VMs; the first crash wins and cancels the rest.
    pub fn parallel_reproduce(&self, spec: &ReproduceSpec) -> Result<ReproduceResult, ReproduceError> {
        self.run(spec)
    }

    fn load_image(&self, image: &ArtifactRef) -> Result<MockImage, ReproduceError> {
        let bytes = self.artifacts.read_bytes(image).map_err(|e| match e {
            ArtifactError::Missing(id) => ReproduceError::ArtifactMissing(id),
            other => ReproduceError::Storage(other),
        })?;
        MockImage::decode(&bytes)
            .ok_or_else(|| ReproduceError::BootFailure("image payload is not bootable".into()))
    }

    fn run(&self, spec: &ReproduceSpec) -> Result<ReproduceResult, ReproduceError> {
        spec.validate()?;
        let image = self.load_image(&spec.image)?;
        let rep_bytes = spec
            .reproducer
            .bytes()
            .map_err(|e| ReproduceError::InvalidSpec(e.to_string()))?;
        let rep_id = String::from_utf8_lossy(&rep_bytes).trim().to_string();
        let script = image.bugs.get(&rep_id);
        let timeout_s = spec.timeout_minutes as f64 * 60.0;

        let samples: Vec<VmSample> =
            (0..spec.vm_count).map(|i| sample_vm(&image, script, spec.seed, i)).collect();
        if samples.iter().all(|s| !s.boot_ok) {
            return Err(ReproduceError::BootFailure(format!(
                "all {} VM(s) failed to boot",
                spec.vm_count
            )));
        }

        // First crash wins: earliest crash time, VM index breaking ties.
        // Later VMs are cancelled — their draws never reach the result.
        let winner = samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.boot_ok && s.crashes && s.delay_s < timeout_s)
            .min_by(|(ia, a), (ib, b)| {
                a.delay_s.partial_cmp(&b.delay_s).expect("finite delays").then(ia.cmp(ib))
            });

        match winner {
            Some((vm_index, sample)) => {
                let script = script.expect("crash implies script");
                let console = self.scratch.join(format!(
                    "console-{}-{}-vm{}.txt",
                    spec.image.artifact_id, spec.seed, vm_index
                ));
                let crash_window =
                    write_console(&console, script, Some(sample.delay_s), &rep_id)?;
                // The detector scan decides "crashed": a script whose
                // title carries no known prefix never flags the run.
                if !contains_detector_line(&crash_window) {
                    let elapsed = timeout_s;
                    let log_ref = self.store_log(&console, spec, vm_index, false)?;
                    return Ok(ReproduceResult {
                        crashed: false,
                        crash: None,
                        elapsed_seconds: elapsed,
                        vm_index,
                        kernel_log_ref: Some(log_ref),
                    });
                }
                let report = CrashReport::from_console(&crash_window)
                    .map_err(|e| ReproduceError::LogUnavailable(e.to_string()))?;
                let log_ref = self.store_log(&console, spec, vm_index, true)?;
                Ok(ReproduceResult {
                    crashed: true,
                    crash: Some(report),
                    elapsed_seconds: quantize_up(sample.delay_s),
                    vm_index,
                    kernel_log_ref: Some(log_ref),
                })
            }
            None => {
                let vm_index =
                    samples.iter().position(|s| s.boot_ok).expect("at least one booted");
                let console = self.scratch.join(format!(
                    "console-{}-{}-vm{}.txt",
                    spec.image.artifact_id, spec.seed, vm_index
                ));
                write_console(&console, &clean_script(script), None, &rep_id)?;
                let log_ref = self.store_log(&console, spec, vm_index, false)?;
                Ok(ReproduceResult {
                    crashed: false,
                    crash: None,
                    elapsed_seconds: timeout_s,
                    vm_index,
                    kernel_log_ref: Some(log_ref),
                })
            }
        }
    }

    fn store_log(
        &self,
        console: &Path,
        spec: &ReproduceSpec,
        vm_index: usize,
        crashed: bool,
    ) -> Result<ArtifactRef, ReproduceError> {
        let id = format!("log-{}-s{}-vm{}", spec.image.artifact_id, spec.seed, vm_index);
        self.collect_kernel_log(console, &id, serde_json::json!({
            "kind": "kernel-log",
            "image": spec.image.artifact_id,
            "vm_index": vm_index,
            "crashed": crashed,
        }))
    }

    /// Stream a console capture into the artifact store without loading
    /// it into memory.
    pub fn collect_kernel_log(
        &self,
        console: &Path,
        artifact_id: &str,
        meta: serde_json::Value,
    ) -> Result<ArtifactRef, ReproduceError> {
        let mut file = File::open(console).map_err(|e| {
            ReproduceError::LogUnavailable(format!("{}: {e}", console.display()))
        })?;
        Ok(self.artifacts.put_stream(artifact_id, "log", &mut file, &meta)?)
    }

    pub fn artifacts(&self) -> &ArtifactStore {
        &self.artifacts
    }
}

fn contains_detector_line(window: &str) -> bool {
    crashgym_core::crash::extract_crash_title(window)
        .is_ok_and(|t| DETECTOR_PREFIXES.iter().any(|d| t.starts_with(d)))
}

/// Script stand-in for runs with no matching bug: boot banner only.
fn clean_script(script: Option<&BehaviorScript>) -> BehaviorScript {
    BehaviorScript {
        crash_probability: 0.0,
        crash_delay_s: 0.0,
        crash_title: String::new(),
        frames: Vec::new(),
        log_lines: script.map_or(0, |s| s.log_lines),
    }
}

/// Synthesize the console to `path`. Boot banner and filler stream to
/// disk; the returned string is only the crash window (empty when the
/// run is clean), which is all the crash parser needs.
fn write_console(
    path: &Path,
    script: &BehaviorScript,
    crash_at: Option<f64>,
    rep_id: &str,
) -> Result<String, ReproduceError> {
    let file = File::create(path)
        .map_err(|e| ReproduceError::LogUnavailable(format!("{}: {e}", path.display())))?;
    let mut out = BufWriter::new(file);
    let io_err =
        |e: std::io::Error| ReproduceError::LogUnavailable(format!("{}: {e}", path.display()));

    let mut t = 0.0_f64;
    let line = |out: &mut BufWriter<File>, t: f64, text: &str| {
        writeln!(out, "[{:>5}.{:06}] {}", t.trunc() as u64, ((t.fract()) * 1e6) as u64, text)
    };
    line(&mut out, t, "Linux version 6.1.0-mock (cc mock) #1 SMP").map_err(io_err)?;
    t += 0.01;
    line(&mut out, t, "Command line: console=ttyS0 root=/dev/vda").map_err(io_err)?;
    t += 0.01;
    line(&mut out, t, &format!("mock-init: starting reproducer {rep_id}")).map_err(io_err)?;
    for i in 0..script.log_lines {
        t += 0.0001;
        line(&mut out, t, &format!("mock-load: iteration {i} of {}", script.log_lines))
            .map_err(io_err)?;
    }

    let window = match crash_at {
        Some(delay) => {
            let mut w = String::new();
            let ts = |t: f64| {
                format!("[{:>5}.{:06}]", t.trunc() as u64, ((t.fract()) * 1e6) as u64)
            };
            let t0 = delay.max(t);
            w.push_str(&format!("{} {}\n", ts(t0), script.crash_title));
            w.push_str(&format!("{} Call Trace:\n", ts(t0)));
            for frame in &script.frames {
                w.push_str(&format!("{}  {}\n", ts(t0), frame));
            }
            w.push_str(&format!("{} ---[ end trace 0000000000000000 ]---\n", ts(t0)));
            out.write_all(w.as_bytes()).map_err(io_err)?;
            w
        }
        None => {
            t += 0.01;
            line(&mut out, t, "mock-init: reproducer exited, no crash observed").map_err(io_err)?;
            String::new()
        }
    };
    out.flush().map_err(io_err)?;
    Ok(window)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crashgym_core::model::ReproducerKind;
    use std::collections::BTreeMap;
    use std::io::Read as _;

    fn store_image(store: &ArtifactStore, id: &str, image: &MockImage) -> ArtifactRef {
        store
            .put_bytes(id, "image", &serde_json::to_vec(image).unwrap(), &serde_json::json!({}))
            .unwrap()
    }

    fn image_with(bugs: BTreeMap<String, BehaviorScript>) -> MockImage {
        MockImage {
            kind: "mock-kernel-image".into(),
            commit_id: "c1".into(),
            source_digest: "d".into(),
            boot_failure_probability: 0.0,
            bugs,
        }
    }

    fn worker(dir: &Path) -> ReproduceWorker {
        let artifacts = ArtifactStore::open(&dir.join("artifacts")).unwrap();
        ReproduceWorker::new(artifacts, &dir.join("scratch")).unwrap()
    }

    fn spec(image: ArtifactRef, rep: &str, timeout_minutes: u32, vm_count: usize) -> ReproduceSpec {
        ReproduceSpec {
            image,
            reproducer: Reproducer::from_bytes(ReproducerKind::MockScript, rep.as_bytes()),
            timeout_minutes,
            vm_count,
            seed: 7,
        }
    }

    fn kasan_script(delay: f64, p: f64) -> BehaviorScript {
        BehaviorScript {
            crash_probability: p,
            crash_delay_s: delay,
            crash_title: "KASAN: use-after-free Read in mock_poll".into(),
            frames: vec![
                "mock_poll+0x11/0x80 drivers/mock/poll.c:77".into(),
                "do_sys_poll+0x2a/0x1f0 fs/select.c:969".into(),
            ],
            log_lines: 0,
        }
    }

    #[test]
    fn scripted_crash_is_detected_with_title_frames_and_log() {
        let dir = tempfile::tempdir().unwrap();
        let w = worker(dir.path());
        let image = image_with(BTreeMap::from([("rep-1".into(), kasan_script(30.0, 1.0))]));
        let image_ref = store_image(w.artifacts(), "img-a", &image);

        let result = w.reproduce_once(&spec(image_ref, "rep-1", 10, 1)).unwrap();
        assert!(result.crashed);
        let crash = result.crash.as_ref().unwrap();
        assert_eq!(crash.crash_title, "KASAN: use-after-free Read in mock_poll");
        assert_eq!(crash.frames[0].function_name, "mock_poll");
        assert!((30.0..30.5 + 1e-9).contains(&result.elapsed_seconds));

        let mut log = String::new();
        w.artifacts()
            .open_stream(result.kernel_log_ref.as_ref().unwrap())
            .unwrap()
            .read_to_string(&mut log)
            .unwrap();
        assert!(log.contains("KASAN: use-after-free Read in mock_poll"));
        assert!(log.contains("mock-init: starting reproducer rep-1"));
    }

    #[test]
    fn clean_run_times_out_with_prefix_free_log() {
        let dir = tempfile::tempdir().unwrap();
        let w = worker(dir.path());
        let image = image_with(BTreeMap::from([("rep-1".into(), kasan_script(30.0, 0.0))]));
        let image_ref = store_image(w.artifacts(), "img-b", &image);

        // Known reproducer with p = 0, and an unknown reproducer id:
        // both must run the full budget.
        for rep in ["rep-1", "rep-unknown"] {
            let result = w.reproduce_once(&spec(image_ref.clone(), rep, 1, 1)).unwrap();
            assert!(!result.crashed);
            assert!(result.crash.is_none());
            assert_eq!(result.elapsed_seconds, 60.0);
            let mut log = String::new();
            w.artifacts()
                .open_stream(result.kernel_log_ref.as_ref().unwrap())
                .unwrap()
                .read_to_string(&mut log)
                .unwrap();
            for line in log.lines() {
                let stripped = line.splitn(2, "] ").nth(1).unwrap_or(line);
                assert!(
                    !DETECTOR_PREFIXES.iter().any(|d| stripped.starts_with(d)),
                    "clean log leaked a detector line: {line}"
                );
            }
        }
    }

    #[test]
    fn crash_slower_than_the_budget_counts_as_resolved() {
        let dir = tempfile::tempdir().unwrap();
        let w = worker(dir.path());
        let image = image_with(BTreeMap::from([("rep-1".into(), kasan_script(90.0, 1.0))]));
        let image_ref = store_image(w.artifacts(), "img-c", &image);
        let result = w.reproduce_once(&spec(image_ref, "rep-1", 1, 1)).unwrap();
        assert!(!result.crashed);
        assert_eq!(result.elapsed_seconds, 60.0);
    }

    #[test]
    fn parallel_first_crash_wins_and_single_vm_degenerates() {
        let dir = tempfile::tempdir().unwrap();
        let w = worker(dir.path());
        let image = image_with(BTreeMap::from([("rep-1".into(), kasan_script(12.0, 1.0))]));
        let image_ref = store_image(w.artifacts(), "img-d", &image);

        let par = w.parallel_reproduce(&spec(image_ref.clone(), "rep-1", 10, 4)).unwrap();
        assert!(par.crashed);
        // Same delay everywhere → the lowest VM index wins the race.
        assert_eq!(par.vm_index, 0);

        let a = w.reproduce_once(&spec(image_ref.clone(), "rep-1", 10, 1)).unwrap();
        let b = w.parallel_reproduce(&spec(image_ref, "rep-1", 10, 1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn boot_failure_only_when_every_vm_fails() {
        let dir = tempfile::tempdir().unwrap();
        let w = worker(dir.path());
        let mut image = image_with(BTreeMap::from([("rep-1".into(), kasan_script(5.0, 1.0))]));
        image.boot_failure_probability = 1.0;
        let image_ref = store_image(w.artifacts(), "img-e", &image);
        let err = w.parallel_reproduce(&spec(image_ref, "rep-1", 10, 4)).unwrap_err();
        assert!(matches!(err, ReproduceError::BootFailure(_)));
        assert!(err.is_infrastructure());

        // Undecodable image payload is a boot failure, not a crash=false.
        let bad = w
            .artifacts()
            .put_bytes("img-junk", "image", b"not json", &serde_json::json!({}))
            .unwrap();
        assert!(matches!(
            w.reproduce_once(&spec(bad, "rep-1", 10, 1)).unwrap_err(),
            ReproduceError::BootFailure(_)
        ));

        // Missing artifact is its own error.
        assert!(matches!(
            w.reproduce_once(&spec(ArtifactRef::new("img-absent"), "rep-1", 10, 1)).unwrap_err(),
            ReproduceError::ArtifactMissing(_)
        ));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let w = worker(dir.path());
        let image = image_with(BTreeMap::new());
        let image_ref = store_image(w.artifacts(), "img-f", &image);
        let bad_timeout = spec(image_ref.clone(), "r", 0, 1);
        let err = w.reproduce_once(&bad_timeout).unwrap_err();
        assert!(matches!(err, ReproduceError::InvalidSpec(_)));
        assert!(!err.is_infrastructure());
        let bad_vms = spec(image_ref, "r", 10, 0);
        assert!(matches!(
            w.parallel_reproduce(&bad_vms).unwrap_err(),
            ReproduceError::InvalidSpec(_)
        ));
    }

    /// Seeded Bernoulli oracle: M=8 VMs at p=0.3 each succeed with
    /// probability 1 − 0.7⁸ ≈ 0.9424; 500 seeds must land within ±0.04.
    #[test]
    fn parallel_success_rate_matches_bernoulli_closed_form() {
        let dir = tempfile::tempdir().unwrap();
        let w = worker(dir.path());
        let image = image_with(BTreeMap::from([("rep-1".into(), kasan_script(10.0, 0.3))]));
        let image_ref = store_image(w.artifacts(), "img-g", &image);

        let trials = 500;
        let mut successes = 0;
        for seed in 0..trials {
            let mut s = spec(image_ref.clone(), "rep-1", 10, 8);
            s.seed = 0xb00 + seed;
            if w.parallel_reproduce(&s).unwrap().crashed {
                successes += 1;
            }
        }
        let rate = successes as f64 / trials as f64;
        let expected = 1.0 - 0.7f64.powi(8);
        assert!(
            (rate - expected).abs() < 0.04,
            "rate {rate:.4} outside {expected:.4} ± 0.04"
        );
    }
}
