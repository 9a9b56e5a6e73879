//! File retrieval for prompt construction: oracle (gold-fix) file lists
//! and Okapi BM25 ranking over a per-commit file corpus, plus the recall
//! diagnostics comparing ranked files against oracle files.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::BenchSample;
use crate::patch::{self, PatchParseError};
use crate::pct::format_pct;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RetrievalMode {
    Oracle,
    Bm25,
}

impl std::fmt::Display for RetrievalMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RetrievalMode::Oracle => f.write_str("oracle"),
            RetrievalMode::Bm25 => f.write_str("bm25"),
        }
    }
}

/// Ranked retrieval output; `scores` runs parallel to `ranked_paths` and
/// is non-increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub mode: RetrievalMode,
    pub k: usize,
    pub ranked_paths: Vec<String>,
    pub scores: Vec<f64>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RetrievalError {
    #[error("query tokenizes to nothing")]
    EmptyQuery,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

/// An indexed snapshot of source files at one commit.
#[derive(Debug, Clone)]
pub struct FileCorpus {
    pub commit_id: String,
    entries: BTreeMap<String, String>,
    token_index: BTreeMap<String, Vec<(String, usize)>>,
    doc_lengths: BTreeMap<String, usize>,
    avg_doc_len: f64,
    params: Bm25Params,
}

impl FileCorpus {
    pub fn build(commit_id: impl Into<String>, entries: BTreeMap<String, String>) -> Self {
        Self::build_with_params(commit_id, entries, Bm25Params::default())
    }

    pub fn build_with_params(
        commit_id: impl Into<String>,
        entries: BTreeMap<String, String>,
        params: Bm25Params,
    ) -> Self {
        let mut token_index: BTreeMap<String, Vec<(String, usize)>> = BTreeMap::new();
        let mut doc_lengths = BTreeMap::new();
        for (path, text) in &entries {
            let tokens = tokenize(text);
            doc_lengths.insert(path.clone(), tokens.len());
            let mut freqs: BTreeMap<String, usize> = BTreeMap::new();
            for token in tokens {
                *freqs.entry(token).or_default() += 1;
            }
            for (token, tf) in freqs {
                token_index.entry(token).or_default().push((path.clone(), tf));
            }
        }
        let avg_doc_len = if entries.is_empty() {
            0.0
        } else {
            doc_lengths.values().sum::<usize>() as f64 / entries.len() as f64
        };
        FileCorpus {
            commit_id: commit_id.into(),
            entries,
            token_index,
            doc_lengths,
            avg_doc_len,
            params,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avg_doc_len
    }

    pub fn text(&self, path: &str) -> Option<&str> {
        self.entries.get(path).map(String::as_str)
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Invariant check: rebuilding the index from `entries` reproduces the
    /// stored index, lengths, and average exactly.
    pub fn rebuild_check(&self) -> bool {
        let rebuilt = FileCorpus::build_with_params("check", self.entries.clone(), self.params);
        rebuilt.token_index == self.token_index
            && rebuilt.doc_lengths == self.doc_lengths
            && rebuilt.avg_doc_len == self.avg_doc_len
    }

    /// Rank documents against `query` with Okapi BM25; top-`k` by score,
    /// ties broken by lexicographic path. Documents sharing no term with
    /// the query are omitted.
    pub fn bm25_rank(&self, query: &str, k: usize) -> Result<RetrievalResult, RetrievalError> {
        let mut terms: Vec<String> = tokenize(query);
        terms.sort();
        terms.dedup();
        if terms.is_empty() {
            return Err(RetrievalError::EmptyQuery);
        }
        let n = self.entries.len() as f64;
        let mut scores: BTreeMap<&str, f64> = BTreeMap::new();
        for term in &terms {
            let Some(postings) = self.token_index.get(term) else { continue };
            let df = postings.len() as f64;
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            for (path, tf) in postings {
                let dl = self.doc_lengths[path] as f64;
                let tf = *tf as f64;
                let Bm25Params { k1, b } = self.params;
                let norm = tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / self.avg_doc_len));
                *scores.entry(path.as_str()).or_default() += idf * norm;
            }
        }
        let mut ranked: Vec<(&str, f64)> = scores.into_iter().collect();
        ranked.sort_by(|(pa, sa), (pb, sb)| {
            sb.partial_cmp(sa).expect("BM25 scores are finite").then_with(|| pa.cmp(pb))
        });
        ranked.truncate(k);
        Ok(RetrievalResult {
            mode: RetrievalMode::Bm25,
            k,
            ranked_paths: ranked.iter().map(|(p, _)| p.to_string()).collect(),
            scores: ranked.iter().map(|(_, s)| *s).collect(),
        })
    }
}

/// Crash-report and source tokenization: lowercase alphanumeric runs
/// (underscores included), with snake_case and camelCase identifiers
/// additionally split into sub-tokens while the original is kept.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut run = String::new();
    for c in text.chars().chain(std::iter::once(' ')) {
        if c.is_ascii_alphanumeric() || c == '_' {
            run.push(c);
        } else if !run.is_empty() {
            push_token(&run, &mut out);
            run.clear();
        }
    }
    out
}

fn push_token(run: &str, out: &mut Vec<String>) {
    out.push(run.to_ascii_lowercase());
    let mut parts = Vec::new();
    let mut cur = String::new();
    let mut prev: Option<char> = None;
    for c in run.chars() {
        let boundary = c == '_'
            || (c.is_ascii_uppercase()
                && prev.is_some_and(|p| p.is_ascii_lowercase() || p.is_ascii_digit()));
        if boundary && !cur.is_empty() {
            parts.push(std::mem::take(&mut cur));
        }
        if c != '_' {
            cur.push(c);
        }
        prev = Some(c);
    }
    if !cur.is_empty() {
        parts.push(cur);
    }
    if parts.len() > 1 {
        for part in parts {
            out.push(part.to_ascii_lowercase());
        }
    }
}

/// Paths the gold fix touches, post-image, distinct, in diff order.
pub fn oracle_files(sample: &BenchSample) -> Result<Vec<String>, PatchParseError> {
    let files = patch::parse(&sample.gold_fix)?;
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for file in &files {
        let path = file.target_path().to_string();
        if seen.insert(path.clone()) {
            out.push(path);
        }
    }
    Ok(out)
}

/// One row of the recall table: how top-`k` ranked files cover oracle
/// files over the budget's eligible subset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecallRow {
    pub budget: usize,
    pub k: usize,
    pub all_pct: String,
    pub any_pct: String,
    pub none_pct: String,
}

/// Compare recorded rankings against oracle sets for each requested `k`,
/// over each budget's eligible bug set. Percentages are over the eligible
/// subset size.
pub fn recall_report(
    oracle_sets: &BTreeMap<String, BTreeSet<String>>,
    rankings: &BTreeMap<String, Vec<String>>,
    ks: &[usize],
    eligible_per_budget: &[(usize, BTreeSet<String>)],
) -> Vec<RecallRow> {
    let mut rows = Vec::new();
    for (budget, eligible) in eligible_per_budget {
        for &k in ks {
            let mut all = 0usize;
            let mut any = 0usize;
            let mut none = 0usize;
            for bug in eligible {
                let oracle = match oracle_sets.get(bug) {
                    Some(set) if !set.is_empty() => set,
                    _ => continue,
                };
                let top: BTreeSet<&str> = rankings
                    .get(bug)
                    .map(|r| r.iter().take(k).map(String::as_str).collect())
                    .unwrap_or_default();
                let hits = oracle.iter().filter(|p| top.contains(p.as_str())).count();
                if hits == oracle.len() {
                    all += 1;
                } else if hits > 0 {
                    any += 1;
                } else {
                    none += 1;
                }
            }
            let denom = all + any + none;
            rows.push(RecallRow {
                budget: *budget,
                k,
                all_pct: format_pct(all, denom),
                any_pct: format_pct(any, denom),
                none_pct: format_pct(none, denom),
            });
        }
    }
    rows
}
