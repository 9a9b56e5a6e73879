//! Benchmark sample model: the per-bug record curated from crash reports,
//! plus fix classification and dataset-level summary statistics.

use std::collections::BTreeSet;
use std::fmt;

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crash::{CrashError, CrashReport};
use crate::patch::{self, DiffFile, PatchParseError};

/// Identifier of a benchmark bug (stable across curation and campaigns).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BugId(pub String);

impl BugId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for BugId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for BugId {
    fn from(s: &str) -> Self {
        BugId(s.to_string())
    }
}

impl From<String> for BugId {
    fn from(s: String) -> Self {
        BugId(s)
    }
}

/// A git commit hash (40 lowercase hex digits).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CommitId(pub String);

impl CommitId {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_well_formed(&self) -> bool {
        self.0.len() == 40 && self.0.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase())
    }
}

impl fmt::Display for CommitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for CommitId {
    fn from(s: &str) -> Self {
        CommitId(s.to_string())
    }
}

impl From<String> for CommitId {
    fn from(s: String) -> Self {
        CommitId(s)
    }
}

/// What kind of payload a reproducer carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReproducerKind {
    /// A syzkaller program.
    Syz,
    /// A standalone C program.
    CProgram,
    /// A script interpreted by the mock virtual machine backend.
    MockScript,
}

/// Reproducer payload. Bytes are stored base64-encoded so records stay
/// valid JSON lines regardless of payload encoding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reproducer {
    pub kind: ReproducerKind,
    pub data: String,
}

impl Reproducer {
    pub fn from_bytes(kind: ReproducerKind, bytes: &[u8]) -> Self {
        Reproducer { kind, data: base64::engine::general_purpose::STANDARD.encode(bytes) }
    }

    pub fn bytes(&self) -> Result<Vec<u8>, ModelError> {
        base64::engine::general_purpose::STANDARD
            .decode(&self.data)
            .map_err(|_| ModelError::BadReproducerEncoding)
    }
}

/// One curated benchmark sample: everything needed to rebuild the crashing
/// kernel, reproduce the crash, and judge a candidate fix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSample {
    pub bug_id: BugId,
    /// Commit at which the crash was originally reported.
    pub commit_bug: CommitId,
    /// Kernel build configuration contents.
    pub config: String,
    pub reproducer: Reproducer,
    /// Commit of the developer fix.
    pub commit_fix: CommitId,
    /// First parent of `commit_fix`; campaigns patch and rebuild here.
    pub commit_parent: CommitId,
    /// Crash captured by running the reproducer at `commit_parent`.
    pub crash_parent: CrashReport,
    /// The developer fix as a unified diff against `commit_parent`.
    pub gold_fix: String,
    /// Cause commit from bisection, when syzbot produced one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bisect: Option<CommitId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub email_refs: Vec<String>,
    pub subsystem: String,
    pub kernel_version: String,
    pub fix_year: i32,
}

impl BenchSample {
    /// Structural validation of one record. Curation rejects records that
    /// fail this before any kernel is ever built.
    pub fn validate(&self) -> Result<(), ModelError> {
        for (field, commit) in [
            ("commit_bug", &self.commit_bug),
            ("commit_fix", &self.commit_fix),
            ("commit_parent", &self.commit_parent),
        ] {
            if !commit.is_well_formed() {
                return Err(ModelError::BadCommit { bug: self.bug_id.clone(), field });
            }
        }
        if self.commit_fix == self.commit_parent || self.commit_fix == self.commit_bug {
            return Err(ModelError::CommitsNotDistinct { bug: self.bug_id.clone() });
        }
        self.crash_parent
            .validate()
            .map_err(|source| ModelError::BadCrash { bug: self.bug_id.clone(), source })?;
        self.parsed_gold_fix()?;
        if !(1990..=2100).contains(&self.fix_year) {
            return Err(ModelError::BadYear { bug: self.bug_id.clone(), year: self.fix_year });
        }
        Ok(())
    }

    pub fn parsed_gold_fix(&self) -> Result<Vec<DiffFile>, ModelError> {
        patch::parse(&self.gold_fix)
            .map_err(|source| ModelError::BadGoldFix { bug: self.bug_id.clone(), source })
    }

    /// Major kernel series label, e.g. `"5.x"` for version `"5.15.2"`.
    pub fn kernel_series(&self) -> String {
        match self.kernel_version.split('.').next() {
            Some(major) if !major.is_empty() => format!("{major}.x"),
            _ => "unknown".to_string(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("sample {bug}: field {field} is not a 40-hex commit hash")]
    BadCommit { bug: BugId, field: &'static str },
    #[error("sample {bug}: bug/fix/parent commits must be distinct")]
    CommitsNotDistinct { bug: BugId },
    #[error("sample {bug}: invalid crash report: {source}")]
    BadCrash { bug: BugId, source: CrashError },
    #[error("sample {bug}: gold fix does not parse: {source}")]
    BadGoldFix { bug: BugId, source: PatchParseError },
    #[error("sample {bug}: implausible fix year {year}")]
    BadYear { bug: BugId, year: i32 },
    #[error("reproducer data is not valid base64")]
    BadReproducerEncoding,
}

/// Shape of a developer fix, derived from its diff alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FixClass {
    SingleLine,
    SingleFunctionMultiLine,
    MultiFunctionSingleFile,
    MultiFile,
}

impl FixClass {
    pub const ALL: [FixClass; 4] = [
        FixClass::SingleLine,
        FixClass::SingleFunctionMultiLine,
        FixClass::MultiFunctionSingleFile,
        FixClass::MultiFile,
    ];
}

impl fmt::Display for FixClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FixClass::SingleLine => "single-line",
            FixClass::SingleFunctionMultiLine => "single-function-multi-line",
            FixClass::MultiFunctionSingleFile => "multi-function-single-file",
            FixClass::MultiFile => "multi-file",
        };
        f.write_str(s)
    }
}

/// Classify a parsed fix by the span it touches.
///
/// Precedence: more than one distinct file wins, then more than one
/// enclosing function (taken from hunk context headers), then the
/// single-line case. A one-line replacement (one `-` plus its `+`) counts
/// as a single changed line here, even though line statistics count the
/// two sides separately.
pub fn classify_fix(files: &[DiffFile]) -> FixClass {
    let paths: BTreeSet<&str> = files.iter().map(|f| f.target_path()).collect();
    if paths.len() > 1 {
        return FixClass::MultiFile;
    }
    let mut functions: BTreeSet<(String, String)> = BTreeSet::new();
    for file in files {
        for hunk in &file.hunks {
            let name = patch::context_function_name(&hunk.context_header).unwrap_or_default();
            functions.insert((file.target_path().to_string(), name));
        }
    }
    if functions.len() > 1 {
        return FixClass::MultiFunctionSingleFile;
    }
    let (adds, dels) = count_changed(files);
    if adds <= 1 && dels <= 1 && adds + dels >= 1 {
        FixClass::SingleLine
    } else {
        FixClass::SingleFunctionMultiLine
    }
}

/// Convenience wrapper that parses the diff first.
pub fn classify_fix_text(diff: &str) -> Result<FixClass, PatchParseError> {
    Ok(classify_fix(&patch::parse(diff)?))
}

fn count_changed(files: &[DiffFile]) -> (usize, usize) {
    let mut adds = 0;
    let mut dels = 0;
    for file in files {
        for hunk in &file.hunks {
            for line in &hunk.lines {
                match line.op {
                    patch::LineOp::Add => adds += 1,
                    patch::LineOp::Del => dels += 1,
                    patch::LineOp::Context => {}
                }
            }
        }
    }
    (adds, dels)
}

/// Number of changed lines in the diffstat sense: additions plus deletions.
pub fn changed_line_count(files: &[DiffFile]) -> usize {
    let (adds, dels) = count_changed(files);
    adds + dels
}

/// Number of distinct files a fix touches.
pub fn changed_file_count(files: &[DiffFile]) -> usize {
    files.iter().map(|f| f.target_path()).collect::<BTreeSet<_>>().len()
}

/// Dataset-level aggregates over gold fixes and captured crash reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub sample_count: usize,
    pub lines_changed_avg: f64,
    pub lines_changed_max: usize,
    pub files_changed_avg: f64,
    pub files_changed_max: usize,
    pub crash_lines_avg: f64,
    pub crash_lines_max: usize,
}

impl SummaryStats {
    pub fn zero() -> Self {
        SummaryStats {
            sample_count: 0,
            lines_changed_avg: 0.0,
            lines_changed_max: 0,
            files_changed_avg: 0.0,
            files_changed_max: 0,
            crash_lines_avg: 0.0,
            crash_lines_max: 0,
        }
    }
}

/// Compute [`SummaryStats`] over a dataset. Empty input yields all zeros.
pub fn fix_stats(samples: &[BenchSample]) -> Result<SummaryStats, ModelError> {
    if samples.is_empty() {
        return Ok(SummaryStats::zero());
    }
    let mut lines_total = 0usize;
    let mut lines_max = 0usize;
    let mut files_total = 0usize;
    let mut files_max = 0usize;
    let mut crash_total = 0usize;
    let mut crash_max = 0usize;
    for sample in samples {
        let parsed = sample.parsed_gold_fix()?;
        let lines = changed_line_count(&parsed);
        let files = changed_file_count(&parsed);
        let crash_lines = sample.crash_parent.line_count;
        lines_total += lines;
        files_total += files;
        crash_total += crash_lines;
        lines_max = lines_max.max(lines);
        files_max = files_max.max(files);
        crash_max = crash_max.max(crash_lines);
    }
    let n = samples.len() as f64;
    Ok(SummaryStats {
        sample_count: samples.len(),
        lines_changed_avg: lines_total as f64 / n,
        lines_changed_max: lines_max,
        files_changed_avg: files_total as f64 / n,
        files_changed_max: files_max,
        crash_lines_avg: crash_total as f64 / n,
        crash_lines_max: crash_max,
    })
}

/// How one set of localization targets relates to a reference set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OverlapClass {
    /// The candidate set covers every reference element.
    Complete,
    /// Some, but not all, reference elements are covered.
    Partial,
    /// No reference element is covered.
    Disjoint,
}

impl fmt::Display for OverlapClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            OverlapClass::Complete => "complete",
            OverlapClass::Partial => "partial",
            OverlapClass::Disjoint => "none",
        };
        f.write_str(s)
    }
}

/// Classify how `candidate` covers `reference`; an empty reference set is
/// never coverable and classifies as disjoint.
pub fn overlap_class<T: Ord>(candidate: &BTreeSet<T>, reference: &BTreeSet<T>) -> OverlapClass {
    if reference.is_empty() {
        return OverlapClass::Disjoint;
    }
    let hits = reference.iter().filter(|t| candidate.contains(t)).count();
    if hits == 0 {
        OverlapClass::Disjoint
    } else if hits == reference.len() {
        OverlapClass::Complete
    } else {
        OverlapClass::Partial
    }
}
