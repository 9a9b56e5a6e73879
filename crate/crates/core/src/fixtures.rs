//! Loading and saving of the packaged benchmark corpus: sample metadata,
//! per-bug source-file size tables, retrieval rankings, and campaign log
//! manifests.
//!
//! Source-file *content* is not stored on disk; files are reconstructed
//! deterministically from (bug id, path, size) so the corpus stays small
//! while byte counts — all that token budgeting observes — are exact.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::BenchSample;
use crate::retrieval::RetrievalMode;

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Malformed { path: String, line: usize, message: String },
}

fn io_err(path: &Path, source: std::io::Error) -> FixtureError {
    FixtureError::Io { path: path.display().to_string(), source }
}

/// One entry of the campaign manifest: a model/setting pair and the
/// outcome log recorded for it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignLogSpec {
    pub model: String,
    pub setting: RetrievalMode,
    pub log: String,
}

/// Bug id → path → file size in bytes.
pub type FileSizes = BTreeMap<String, BTreeMap<String, usize>>;

/// Bug id → ranked candidate paths, best first.
pub type Rankings = BTreeMap<String, Vec<String>>;

pub fn load_samples(path: &Path) -> Result<Vec<BenchSample>, FixtureError> {
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut samples = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: BenchSample =
            serde_json::from_str(&line).map_err(|e| FixtureError::Malformed {
                path: path.display().to_string(),
                line: idx + 1,
                message: e.to_string(),
            })?;
        sample.validate().map_err(|e| FixtureError::Malformed {
            path: path.display().to_string(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        samples.push(sample);
    }
    Ok(samples)
}

pub fn save_samples(path: &Path, samples: &[BenchSample]) -> Result<(), FixtureError> {
    let mut out = Vec::new();
    for s in samples {
        let line = serde_json::to_string(s).expect("samples serialize");
        out.extend_from_slice(line.as_bytes());
        out.push(b'\n');
    }
    write_atomic(path, &out)
}

pub fn load_file_sizes(path: &Path) -> Result<FileSizes, FixtureError> {
    read_json(path)
}

pub fn save_file_sizes(path: &Path, sizes: &FileSizes) -> Result<(), FixtureError> {
    write_json(path, sizes)
}

pub fn load_rankings(path: &Path) -> Result<Rankings, FixtureError> {
    read_json(path)
}

pub fn save_rankings(path: &Path, rankings: &Rankings) -> Result<(), FixtureError> {
    write_json(path, rankings)
}

pub fn load_manifest(path: &Path) -> Result<Vec<CampaignLogSpec>, FixtureError> {
    read_json(path)
}

pub fn save_manifest(path: &Path, manifest: &[CampaignLogSpec]) -> Result<(), FixtureError> {
    write_json(path, &manifest)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, FixtureError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| FixtureError::Malformed {
        path: path.display().to_string(),
        line: e.line(),
        message: e.to_string(),
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), FixtureError> {
    let mut text = serde_json::to_string_pretty(value).expect("fixture value serializes");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), FixtureError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(path, e))?;
    }
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
        f.write_all(bytes).map_err(|e| io_err(&tmp, e))?;
        f.flush().map_err(|e| io_err(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

/// Deterministic reconstruction of one source file: exactly `size` bytes,
/// ASCII, newline-terminated whenever non-empty.
pub fn file_text(bug_id: &str, path: &str, size: usize) -> String {
    if size == 0 {
        return String::new();
    }
    let stem = format!("/* {bug_id} {path} */");
    let mut s = String::with_capacity(size + stem.len() + 16);
    let mut i = 0usize;
    while s.len() < size {
        s.push_str(&stem);
        s.push_str(" line ");
        s.push_str(&i.to_string());
        s.push('\n');
        i += 1;
    }
    s.truncate(size);
    s.replace_range(size - 1..size, "\n");
    s
}

/// All reconstructed texts for one bug.
pub fn texts_for(sizes: &FileSizes, bug_id: &str) -> BTreeMap<String, String> {
    sizes
        .get(bug_id)
        .map(|files| {
            files
                .iter()
                .map(|(path, &size)| (path.clone(), file_text(bug_id, path, size)))
                .collect()
        })
        .unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_text_has_exact_size_and_trailing_newline() {
        for size in [1usize, 2, 7, 100, 4096, 170_001] {
            let t = file_text("bug-1", "fs/ext4/inode.c", size);
            assert_eq!(t.len(), size);
            assert!(t.ends_with('\n'));
        }
        assert_eq!(file_text("b", "p", 0), "");
        // Deterministic across calls.
        assert_eq!(file_text("b", "p", 500), file_text("b", "p", 500));
    }

    #[test]
    fn json_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rankings.json");
        let mut rankings = Rankings::new();
        rankings.insert("bug-1".into(), vec!["a.c".into(), "b.c".into()]);
        save_rankings(&path, &rankings).unwrap();
        assert_eq!(load_rankings(&path).unwrap(), rankings);

        let manifest = vec![CampaignLogSpec {
            model: "m".into(),
            setting: RetrievalMode::Oracle,
            log: "m-oracle.jsonl".into(),
        }];
        let mpath = dir.path().join("models.json");
        save_manifest(&mpath, &manifest).unwrap();
        assert_eq!(load_manifest(&mpath).unwrap(), manifest);
    }
}
