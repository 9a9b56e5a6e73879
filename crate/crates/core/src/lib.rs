//! Core library for crashgym: the data model for kernel-crash benchmark
//! samples, crash-report parsing, a unified-diff patch engine, BM25 file
//! retrieval, repair-prompt assembly, and the metrics used to evaluate
//! resolution campaigns.
//!
//! Everything in this crate is deterministic and free of I/O side effects
//! except the explicit log and fixture loaders. The orchestration layer
//! lives in `crashgym-platform`.

pub mod crash;
pub mod evaluator;
pub mod fixtures;
pub mod model;
pub mod outcome;
pub mod patch;
pub mod pct;
pub mod prompt;
pub mod report;
pub mod retrieval;
pub mod synth;

pub use model::{BenchSample, BugId, CommitId, FixClass, OverlapClass};
