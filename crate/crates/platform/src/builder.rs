//! The build worker: checkout, optional patch, compile, publish image.
//!
//! Compilation is behind `BuildBackend`. The mock backend "compiles" a
//! mini source tree by scanning it: any `#error` directive fails the
//! build, and every `BUG(<id>)` marker contributes a crash behavior
//! script to the produced image, so downstream reproduce runs crash
//! exactly for the reproducer ids still present in the patched tree.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::LazyLock;

use crashgym_core::patch::{self, Tree};
use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::artifacts::{ArtifactError, ArtifactRef, ArtifactStore};
use crate::gitstore::{GitError, GitManager};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Compiler {
    #[default]
    Gcc,
    Clang,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Linker {
    #[default]
    #[serde(rename = "ld")]
    Ld,
    #[serde(rename = "ld.lld")]
    LdLld,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    #[default]
    Amd64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UserspaceImg {
    #[default]
    Buildroot,
    DebianBullseye,
    DebianBuster,
    DebianStretch,
}

impl fmt::Display for Compiler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Compiler::Gcc => "gcc",
            Compiler::Clang => "clang",
        })
    }
}

impl fmt::Display for Linker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Linker::Ld => "ld",
            Linker::LdLld => "ld.lld",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildSpec {
    pub git_url: String,
    pub commit_id: String,
    #[serde(default)]
    pub kernel_config: String,
    #[serde(default)]
    pub compiler: Compiler,
    #[serde(default)]
    pub linker: Linker,
    #[serde(default)]
    pub arch: Arch,
    #[serde(default)]
    pub userspace_img: UserspaceImg,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patch: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageArtifact {
    pub artifact_id: String,
    pub storage_path: String,
    pub build_log: String,
    pub source_digest: String,
    pub spec: BuildSpec,
}

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("unknown commit {0}")]
    UnknownCommit(String),
    #[error("clone failure: {0}")]
    CloneFailure(String),
    #[error("patch rejected: {0}")]
    PatchRejected(String),
    #[error("compile error:\n{log}")]
    CompileError { log: String },
    #[error(transparent)]
    Storage(#[from] ArtifactError),
}

impl BuildError {
    /// Infrastructure failures are retryable/voiding; semantic ones are
    /// results in their own right.
    pub fn is_infrastructure(&self) -> bool {
        matches!(self, BuildError::CloneFailure(_) | BuildError::Storage(_))
    }
}

// ---------------------------------------------------------------------------
// Mock image payload

/// Crash behavior for one reproducer id baked into a mock image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorScript {
    #[serde(default = "default_probability")]
    pub crash_probability: f64,
    #[serde(default = "default_delay")]
    pub crash_delay_s: f64,
    pub crash_title: String,
    #[serde(default)]
    pub frames: Vec<String>,
    /// Filler console lines emitted before the crash window; lets tests
    /// exercise very large kernel logs.
    #[serde(default)]
    pub log_lines: usize,
}

fn default_probability() -> f64 {
    1.0
}

fn default_delay() -> f64 {
    30.0
}

impl BehaviorScript {
    /// Default script for a bare `BUG(<id>)` marker.
    pub fn for_id(id: &str) -> BehaviorScript {
        let func = id
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
            .collect::<String>();
        BehaviorScript {
            crash_probability: 1.0,
            crash_delay_s: 30.0,
            crash_title: format!("BUG: unable to handle kernel paging request in {func}_handler"),
            frames: vec![
                format!("{func}_handler+0x1a/0x9c drivers/mock/{func}.c:42"),
                "ksys_write+0x73/0xe0 fs/read_write.c:643".into(),
                "do_syscall_64+0x39/0xb0 arch/x86/entry/common.c:50".into(),
            ],
            log_lines: 0,
        }
    }
}

/// The bytes a mock build stores as its "disk image".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockImage {
    pub kind: String,
    pub commit_id: String,
    pub source_digest: String,
    #[serde(default)]
    pub boot_failure_probability: f64,
    pub bugs: BTreeMap<String, BehaviorScript>,
}

impl MockImage {
    pub fn decode(bytes: &[u8]) -> Option<MockImage> {
        serde_json::from_slice(bytes).ok()
    }
}

// ---------------------------------------------------------------------------
// Backends

pub trait BuildBackend: Send {
    /// Compile the (already patched) tree; append to `log`; return the
    /// image bytes.
    fn compile(&self, tree: &Tree, spec: &BuildSpec, log: &mut String)
        -> Result<Vec<u8>, BuildError>;
}

static BUG_MARKER: LazyLock<Regex> = LazyLock::new(|| {
    // `BUG(<id>)` optionally followed by `: {json behavior script}`.
    Regex::new(r"BUG\(([A-Za-z0-9_.:-]+)\)(?::\s*(\{.*\}))?").expect("static regex")
});

/// Tree-level knobs a mock repo can set in a root `mock.json` file.
#[derive(Debug, Default, Deserialize)]
struct MockTreeConfig {
    #[serde(default)]
    boot_failure_probability: f64,
}

#[derive(Debug, Default)]
pub struct MockBackend;

impl BuildBackend for MockBackend {
    fn compile(
        &self,
        tree: &Tree,
        spec: &BuildSpec,
        log: &mut String,
    ) -> Result<Vec<u8>, BuildError> {
        let mut bugs = BTreeMap::new();
        for (path, content) in tree {
            for (lineno, line) in content.lines().enumerate() {
                if line.contains("#error") {
                    log.push_str(&format!(
                        "{}:{}: error: {}\n",
                        path,
                        lineno + 1,
                        line.trim()
                    ));
                    return Err(BuildError::CompileError { log: log.clone() });
                }
                if let Some(caps) = BUG_MARKER.captures(line) {
                    let id = caps[1].to_string();
                    let script = match caps.get(2) {
                        Some(json) => serde_json::from_str(json.as_str()).map_err(|e| {
                            log.push_str(&format!(
                                "{}:{}: error: bad behavior script: {}\n",
                                path,
                                lineno + 1,
                                e
                            ));
                            BuildError::CompileError { log: log.clone() }
                        })?,
                        None => BehaviorScript::for_id(&id),
                    };
                    bugs.insert(id, script);
                }
            }
        }
        let config: MockTreeConfig = tree
            .get("mock.json")
            .and_then(|text| serde_json::from_str(text).ok())
            .unwrap_or_default();
        let image = MockImage {
            kind: "mock-kernel-image".into(),
            commit_id: spec.commit_id.clone(),
            source_digest: patch::tree_digest(tree),
            boot_failure_probability: config.boot_failure_probability,
            bugs,
        };
        log.push_str(&format!(
            "cc ({}) -fuse-ld={} -march={:?}: {} object(s), {} crash site(s)\n",
            spec.compiler,
            spec.linker,
            spec.arch,
            tree.len(),
            image.bugs.len()
        ));
        Ok(serde_json::to_vec_pretty(&image).expect("image serializes"))
    }
}

/// Runs a configurable command with the tree written to a scratch
/// workspace; the command's stdout/stderr become the compile log and a
/// declared output file becomes the image.
pub struct ShellBackend {
    pub command_template: String,
    pub output_file: String,
    pub scratch: std::path::PathBuf,
}

impl BuildBackend for ShellBackend {
    fn compile(
        &self,
        tree: &Tree,
        spec: &BuildSpec,
        log: &mut String,
    ) -> Result<Vec<u8>, BuildError> {
        let dir = self.scratch.join(format!("build-{}", &patch::tree_digest(tree)[..12]));
        let write_err = |e: std::io::Error| BuildError::CompileError {
            log: format!("workspace setup failed: {e}"),
        };
        std::fs::create_dir_all(&dir).map_err(write_err)?;
        for (path, content) in tree {
            let full = dir.join(path);
            if let Some(parent) = full.parent() {
                std::fs::create_dir_all(parent).map_err(write_err)?;
            }
            std::fs::write(full, content).map_err(write_err)?;
        }
        let command = self
            .command_template
            .replace("{workspace}", &dir.to_string_lossy())
            .replace("{compiler}", &spec.compiler.to_string())
            .replace("{linker}", &spec.linker.to_string());
        let out = std::process::Command::new("sh")
            .arg("-c")
            .arg(&command)
            .current_dir(&dir)
            .output()
            .map_err(|e| BuildError::CompileError { log: format!("spawn failed: {e}") })?;
        log.push_str(&String::from_utf8_lossy(&out.stdout));
        log.push_str(&String::from_utf8_lossy(&out.stderr));
        if !out.status.success() {
            return Err(BuildError::CompileError { log: log.clone() });
        }
        std::fs::read(dir.join(&self.output_file))
            .map_err(|e| BuildError::CompileError { log: format!("no image produced: {e}") })
    }
}

// ---------------------------------------------------------------------------
// The worker

pub struct Builder<B: BuildBackend> {
    git: GitManager,
    artifacts: ArtifactStore,
    backend: B,
}

impl<B: BuildBackend> Builder<B> {
    pub fn new(artifacts: ArtifactStore, backend: B) -> Builder<B> {
        Builder { git: GitManager::new(), artifacts, backend }
    }

    pub fn git(&self) -> &GitManager {
        &self.git
    }

    /// Checkout → (patch) → compile → store. The build log records the
    /// phases in that order.
    pub fn build(&mut self, spec: &BuildSpec) -> Result<ImageArtifact, BuildError> {
        let mut log = String::new();
        let store = self.git.open(&spec.git_url).map_err(|e| match e {
            GitError::CloneFailure { message, .. } => BuildError::CloneFailure(message),
            other => BuildError::CloneFailure(other.to_string()),
        })?;
        if !store.commit_exists(&spec.commit_id) {
            return Err(BuildError::UnknownCommit(spec.commit_id.clone()));
        }
        let mut tree = store.checkout(&spec.commit_id).map_err(|e| match e {
            GitError::UnknownCommit(c) => BuildError::UnknownCommit(c),
            other => BuildError::CloneFailure(other.to_string()),
        })?;
        log.push_str(&format!(
            "checkout {} from {}: {} file(s)\n",
            spec.commit_id,
            spec.git_url,
            tree.len()
        ));

        if let Some(patch_text) = &spec.patch {
            let files = patch::parse(patch_text)
                .map_err(|e| BuildError::PatchRejected(e.to_string()))?;
            let changed = patch::apply(&mut tree, &files)
                .map_err(|e| BuildError::PatchRejected(e.to_string()))?;
            log.push_str(&format!("apply patch: {} path(s) changed\n", changed.len()));
        }

        let image_bytes = self.backend.compile(&tree, spec, &mut log)?;
        let source_digest = patch::tree_digest(&tree);
        let artifact_id = image_artifact_id(&source_digest, spec);

        let mut artifact = ImageArtifact {
            artifact_id: artifact_id.clone(),
            storage_path: String::new(),
            build_log: log,
            source_digest,
            spec: spec.clone(),
        };
        let meta = serde_json::to_value(&artifact).expect("meta serializes");
        let stored = self.artifacts.put_bytes(&artifact_id, "image", &image_bytes, &meta)?;
        artifact.storage_path = self.artifacts.payload_path(&stored).to_string_lossy().into_owned();
        Ok(artifact)
    }

    pub fn artifact_ref(artifact: &ImageArtifact) -> ArtifactRef {
        ArtifactRef::new(&artifact.artifact_id)
    }

    /// One file's content at a commit, without building anything.
    /// `Ok(None)` means the commit exists but has no such path.
    pub fn retrieve_file(
        &mut self,
        git_url: &str,
        commit_id: &str,
        path: &str,
    ) -> Result<Option<String>, BuildError> {
        let store = self.git.open(git_url).map_err(|e| match e {
            GitError::CloneFailure { message, .. } => BuildError::CloneFailure(message),
            other => BuildError::CloneFailure(other.to_string()),
        })?;
        match store.tree_at(commit_id) {
            Ok(tree) => Ok(tree.get(path).cloned()),
            Err(GitError::UnknownCommit(c)) => Err(BuildError::UnknownCommit(c)),
            Err(other) => Err(BuildError::CloneFailure(other.to_string())),
        }
    }
}

/// Deterministic for identical post-patch tree + build arguments.
fn image_artifact_id(source_digest: &str, spec: &BuildSpec) -> String {
    let mut hasher = Sha256::new();
    hasher.update(source_digest.as_bytes());
    hasher.update([0]);
    hasher.update(spec.kernel_config.as_bytes());
    hasher.update([0]);
    hasher.update(
        format!("{}|{}|{:?}|{:?}", spec.compiler, spec.linker, spec.arch, spec.userspace_img)
            .as_bytes(),
    );
    let digest = hasher.finalize();
    let hex: String = digest.iter().take(8).map(|b| format!("{b:02x}")).collect();
    format!("img-{hex}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gitstore::{RepoCommit, RepoFile};
    use std::path::Path;

    fn repo_with(tree: BTreeMap<String, String>, dir: &Path) -> String {
        let repo = RepoFile {
            commits: vec![RepoCommit { id: "c1".into(), parents: vec![], tree }],
        };
        let path = dir.join("repo.json");
        std::fs::write(&path, serde_json::to_string(&repo).unwrap()).unwrap();
        path.to_string_lossy().into_owned()
    }

    fn spec(url: &str) -> BuildSpec {
        BuildSpec {
            git_url: url.into(),
            commit_id: "c1".into(),
            kernel_config: "CONFIG_KASAN=y\n".into(),
            compiler: Compiler::Gcc,
            linker: Linker::Ld,
            arch: Arch::Amd64,
            userspace_img: UserspaceImg::Buildroot,
            patch: None,
        }
    }

    fn builder(dir: &Path) -> Builder<MockBackend> {
        let artifacts = ArtifactStore::open(&dir.join("artifacts")).unwrap();
        Builder::new(artifacts, MockBackend)
    }

    #[test]
    fn clean_build_is_deterministic_and_registers_an_image() {
        let dir = tempfile::tempdir().unwrap();
        let url = repo_with(
            BTreeMap::from([
                ("src/main.c".into(), "int main(void) { return 0; }\n".into()),
                ("src/drv.c".into(), "// BUG(bug-41)\nstatic int x;\n".into()),
            ]),
            dir.path(),
        );
        let mut b = builder(dir.path());
        let a1 = b.build(&spec(&url)).unwrap();
        let a2 = b.build(&spec(&url)).unwrap();
        assert_eq!(a1.source_digest, a2.source_digest);
        assert_eq!(a1.artifact_id, a2.artifact_id);

        let bytes = b.artifacts.read_bytes(&ArtifactRef::new(&a1.artifact_id)).unwrap();
        let image = MockImage::decode(&bytes).unwrap();
        assert_eq!(image.source_digest, a1.source_digest);
        assert!(image.bugs.contains_key("bug-41"));
        // Second build of the same URL reused the clone.
        assert_eq!(b.git().clone_hits(), 1);
    }

    #[test]
    fn patch_runs_before_compile_and_removes_the_crash_site() {
        let dir = tempfile::tempdir().unwrap();
        let url = repo_with(
            BTreeMap::from([(
                "src/drv.c".into(),
                "static int x;\n// BUG(bug-41)\nstatic int y;\n".into(),
            )]),
            dir.path(),
        );
        let mut b = builder(dir.path());
        let mut s = spec(&url);
        s.patch = Some(
            "diff --git a/src/drv.c b/src/drv.c\n\
             --- a/src/drv.c\n\
             +++ b/src/drv.c\n\
             @@ -1,3 +1,2 @@\n \
             static int x;\n\
             -// BUG(bug-41)\n \
             static int y;\n"
                .into(),
        );
        let artifact = b.build(&s).unwrap();
        let image = MockImage::decode(
            &b.artifacts.read_bytes(&Builder::<MockBackend>::artifact_ref(&artifact)).unwrap(),
        )
        .unwrap();
        assert!(image.bugs.is_empty(), "patched-out marker must not survive");

        // Phase ordering is visible in the log.
        let patch_pos = artifact.build_log.find("apply patch").unwrap();
        let compile_pos = artifact.build_log.find("cc (gcc)").unwrap();
        assert!(patch_pos < compile_pos);

        // The patched tree digest differs from the unpatched one.
        let unpatched = b.build(&spec(&url)).unwrap();
        assert_ne!(unpatched.source_digest, artifact.source_digest);
    }

    #[test]
    fn rejected_patch_is_distinct_from_compile_error() {
        let dir = tempfile::tempdir().unwrap();
        let url = repo_with(
            BTreeMap::from([("src/a.c".into(), "int a;\n".into())]),
            dir.path(),
        );
        let mut b = builder(dir.path());

        let mut s = spec(&url);
        s.patch = Some(
            "diff --git a/src/a.c b/src/a.c\n\
             --- a/src/a.c\n\
             +++ b/src/a.c\n\
             @@ -1 +0,0 @@\n\
             -int not_present;\n"
                .into(),
        );
        match b.build(&s).unwrap_err() {
            BuildError::PatchRejected(reason) => assert!(reason.contains("hunk")),
            other => panic!("expected PatchRejected, got {other:?}"),
        }

        let dir2 = dir.path().join("r2");
        std::fs::create_dir_all(&dir2).unwrap();
        let url2 = repo_with(
            BTreeMap::from([("src/b.c".into(), "#error broken\n".into())]),
            &dir2,
        );
        let mut s2 = spec(&url2);
        s2.commit_id = "c1".into();
        match b.build(&s2).unwrap_err() {
            BuildError::CompileError { log } => assert!(log.contains("src/b.c:1")),
            other => panic!("expected CompileError, got {other:?}"),
        }
    }

    #[test]
    fn unknown_commit_and_bad_url() {
        let dir = tempfile::tempdir().unwrap();
        let url = repo_with(BTreeMap::from([("f".into(), "x\n".into())]), dir.path());
        let mut b = builder(dir.path());
        let mut s = spec(&url);
        s.commit_id = "deadbeef".repeat(5);
        assert!(matches!(b.build(&s).unwrap_err(), BuildError::UnknownCommit(_)));
        let mut s2 = spec("/nonexistent/repo.json");
        s2.commit_id = "c1".into();
        let err = b.build(&s2).unwrap_err();
        assert!(matches!(err, BuildError::CloneFailure(_)));
        assert!(err.is_infrastructure());
    }
}
