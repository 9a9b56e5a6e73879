//! Synthetic-workload generators used by property tests and fixture
//! construction: random file trees, structured edits with an independent
//! reference applier, guaranteed-invalid diff mutations, and a
//! brute-force BM25 reference scorer.
//!
//! Everything here is deliberately independent of the production parse/
//! apply/index code paths so it can serve as an oracle for them.

use std::collections::BTreeMap;

use rand::Rng;

use crate::patch::{DiffFile, DiffLine, Hunk, LineOp, Tree};
use crate::retrieval::{Bm25Params, tokenize};

// ---------------------------------------------------------------------------
// Random trees

const WORDS: [&str; 16] = [
    "alpha", "beta", "gamma", "delta", "epsilon", "zeta", "lock", "inode", "queue", "flush",
    "probe", "attach", "buffer", "index", "frame", "page",
];

/// A generated file: its lines plus whether the file ends with a newline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenFile {
    pub lines: Vec<String>,
    pub terminated: bool,
}

impl GenFile {
    pub fn content(&self) -> String {
        if self.lines.is_empty() {
            return String::new();
        }
        let mut s = self.lines.join("\n");
        if self.terminated {
            s.push('\n');
        }
        s
    }

    pub fn from_content(content: &str) -> GenFile {
        if content.is_empty() {
            return GenFile { lines: Vec::new(), terminated: true };
        }
        let terminated = content.ends_with('\n');
        let body = if terminated { &content[..content.len() - 1] } else { content };
        GenFile { lines: body.split('\n').map(String::from).collect(), terminated }
    }
}

fn random_line(rng: &mut impl Rng, salt: u32) -> String {
    match rng.gen_range(0..10u32) {
        0 => String::new(),
        1 => "}".to_string(),
        _ => {
            let a = WORDS[rng.gen_range(0..WORDS.len())];
            let b = WORDS[rng.gen_range(0..WORDS.len())];
            format!("{a} {b} v{}-{salt}", rng.gen_range(0..1000u32))
        }
    }
}

/// A small random tree; paths are distinct, some files unterminated,
/// some empty.
pub fn random_tree(rng: &mut impl Rng) -> Tree {
    let file_count = rng.gen_range(1..=6usize);
    let mut tree = Tree::new();
    for i in 0..file_count {
        let path = format!("src/file_{i}_{}.c", rng.gen_range(0..100u32));
        let line_count = rng.gen_range(0..=50usize);
        let lines: Vec<String> = (0..line_count).map(|j| random_line(rng, j as u32)).collect();
        let terminated = line_count == 0 || rng.gen_range(0..10u32) != 0;
        tree.insert(path, GenFile { lines, terminated }.content());
    }
    tree
}

// ---------------------------------------------------------------------------
// Structured edits

/// Replace `del` lines at 0-based position `at` with `insert`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpliceOp {
    pub at: usize,
    pub del: usize,
    pub insert: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileMod {
    pub path: String,
    /// Context lines per hunk side when rendered as a diff.
    pub context: usize,
    pub ops: Vec<SpliceOp>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TreeEdit {
    pub creates: Vec<(String, Vec<String>)>,
    pub deletes: Vec<String>,
    pub modifies: Vec<FileMod>,
}

static INSERT_COUNTER: std::sync::atomic::AtomicU64 = std::sync::atomic::AtomicU64::new(0);

fn fresh_insert_line(rng: &mut impl Rng) -> String {
    let n = INSERT_COUNTER.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
    format!("ins {} n{}-{}", WORDS[rng.gen_range(0..WORDS.len())], n, rng.gen_range(0..1000u32))
}

/// Generate an edit touching a random subset of `tree`: always at least
/// one modification, creation, or deletion.
pub fn random_edit(rng: &mut impl Rng, tree: &Tree) -> TreeEdit {
    let mut edit = TreeEdit::default();
    let paths: Vec<&String> = tree.keys().collect();

    for path in &paths {
        let file = GenFile::from_content(&tree[*path]);
        match rng.gen_range(0..10u32) {
            // Delete occasionally; empty files cannot be expressed as a
            // deletion diff (it would have no hunk lines).
            0 if !file.lines.is_empty() => edit.deletes.push((*path).clone()),
            1..=6 => {
                if let Some(m) = random_file_mod(rng, path, &file) {
                    edit.modifies.push(m);
                }
            }
            _ => {}
        }
    }
    let empty = edit.creates.is_empty() && edit.deletes.is_empty() && edit.modifies.is_empty();
    if empty || rng.gen_range(0..3u32) == 0 {
        let line_count = rng.gen_range(1..=8usize);
        let lines = (0..line_count).map(|_| fresh_insert_line(rng)).collect();
        edit.creates.push((format!("src/new_{}.c", rng.gen_range(0..10_000u32)), lines));
    }
    edit
}

fn random_file_mod(rng: &mut impl Rng, path: &str, file: &GenFile) -> Option<FileMod> {
    let len = file.lines.len();
    let context = rng.gen_range(0..=3usize);
    let mut ops = Vec::new();
    // Ops stay far enough apart that their context regions cannot touch.
    let spacing = 2 * context + 1;
    let mut cursor = 0usize;
    for _ in 0..rng.gen_range(1..=3usize) {
        if cursor > len {
            break;
        }
        let at = rng.gen_range(cursor..=len);
        let max_del = (len - at).min(4);
        let del = rng.gen_range(0..=max_del);
        let insert_count =
            if del == 0 { rng.gen_range(1..=4usize) } else { rng.gen_range(0..=4usize) };
        let insert = (0..insert_count).map(|_| fresh_insert_line(rng)).collect();
        ops.push(SpliceOp { at, del, insert });
        cursor = at + del + spacing;
    }
    if ops.is_empty() {
        None
    } else {
        Some(FileMod { path: path.to_string(), context, ops })
    }
}

/// Apply an edit directly to a tree — the reference the patch pipeline is
/// checked against. Line provenance decides the new file's final-newline
/// state: a surviving original last line keeps the original termination,
/// an inserted last line is always terminated.
pub fn reference_apply(tree: &Tree, edit: &TreeEdit) -> Tree {
    let mut out = tree.clone();
    for path in &edit.deletes {
        out.remove(path);
    }
    for (path, lines) in &edit.creates {
        out.insert(path.clone(), GenFile { lines: lines.clone(), terminated: true }.content());
    }
    for m in &edit.modifies {
        let file = GenFile::from_content(&out[&m.path]);
        let orig_len = file.lines.len();
        #[derive(Clone)]
        enum Src {
            Original(usize),
            Inserted,
        }
        let mut rows: Vec<(Src, String)> = file
            .lines
            .iter()
            .enumerate()
            .map(|(i, l)| (Src::Original(i), l.clone()))
            .collect();
        // Apply from the back so earlier positions stay valid.
        for op in m.ops.iter().rev() {
            let replacement: Vec<(Src, String)> =
                op.insert.iter().map(|l| (Src::Inserted, l.clone())).collect();
            rows.splice(op.at..op.at + op.del, replacement);
        }
        let terminated = match rows.last() {
            None => true,
            Some((Src::Original(i), _)) if *i == orig_len - 1 => file.terminated,
            Some(_) => true,
        };
        let lines: Vec<String> = rows.into_iter().map(|(_, l)| l).collect();
        out.insert(m.path.clone(), GenFile { lines, terminated }.content());
    }
    out
}

/// Render an edit as parsed diff structures (the production renderer then
/// turns them into text).
pub fn edit_to_diff(tree: &Tree, edit: &TreeEdit) -> Vec<DiffFile> {
    let mut files = Vec::new();
    for path in &edit.deletes {
        let file = GenFile::from_content(&tree[path]);
        let mut lines: Vec<DiffLine> =
            file.lines.iter().map(|l| DiffLine::new(LineOp::Del, l.clone())).collect();
        if !file.terminated {
            lines.last_mut().expect("deletions are non-empty").no_newline = true;
        }
        files.push(DiffFile {
            old_path: Some(path.clone()),
            new_path: None,
            hunks: vec![Hunk {
                old_start: 1,
                old_len: lines.len(),
                new_start: 0,
                new_len: 0,
                context_header: String::new(),
                lines,
            }],
        });
    }
    for (path, lines) in &edit.creates {
        files.push(DiffFile {
            old_path: None,
            new_path: Some(path.clone()),
            hunks: vec![Hunk {
                old_start: 0,
                old_len: 0,
                new_start: 1,
                new_len: lines.len(),
                context_header: String::new(),
                lines: lines.iter().map(|l| DiffLine::new(LineOp::Add, l.clone())).collect(),
            }],
        });
    }
    for m in &edit.modifies {
        let file = GenFile::from_content(&tree[&m.path]);
        let len = file.lines.len();
        let mut hunks = Vec::new();
        let mut acc: i64 = 0;
        for op in &m.ops {
            let cb = m.context.min(op.at);
            let ca = m.context.min(len - (op.at + op.del));
            let start0 = op.at - cb;
            let mut lines = Vec::new();
            for i in start0..op.at {
                lines.push(DiffLine::new(LineOp::Context, file.lines[i].clone()));
            }
            for i in op.at..op.at + op.del {
                lines.push(DiffLine::new(LineOp::Del, file.lines[i].clone()));
            }
            for l in &op.insert {
                lines.push(DiffLine::new(LineOp::Add, l.clone()));
            }
            for i in op.at + op.del..op.at + op.del + ca {
                lines.push(DiffLine::new(LineOp::Context, file.lines[i].clone()));
            }
            // An unterminated original EOF inside the hunk marks the last
            // old-side line (context rows are shared by both sides). A
            // zero-context append at EOF has no old-side rows and leaves
            // the termination change implicit.
            if !file.terminated && op.at + op.del + ca == len && len > 0 {
                if let Some(last_old) = lines.iter_mut().rev().find(|l| l.op != LineOp::Add) {
                    last_old.no_newline = true;
                }
            }
            let old_len = cb + op.del + ca;
            let new_len = cb + op.insert.len() + ca;
            let old_start = if old_len == 0 { op.at } else { start0 + 1 };
            let mapped0 = start0 as i64 + acc;
            let new_start = if new_len == 0 { mapped0 as usize } else { (mapped0 + 1) as usize };
            hunks.push(Hunk {
                old_start,
                old_len,
                new_start,
                new_len,
                context_header: String::new(),
                lines,
            });
            acc += op.insert.len() as i64 - op.del as i64;
        }
        files.push(DiffFile { old_path: Some(m.path.clone()), new_path: Some(m.path.clone()), hunks });
    }
    files
}

// ---------------------------------------------------------------------------
// Guaranteed-invalid mutations

/// Corrupt rendered diff text so that it must be rejected — either as
/// structurally malformed or as unappliable to `tree`. The mutation
/// classes are constructed to make acceptance impossible, not merely
/// unlikely.
pub fn mutate_diff_text(rng: &mut impl Rng, tree: &Tree, rendered: &str) -> String {
    let lines: Vec<&str> = rendered.lines().collect();
    let hunk_headers: Vec<usize> =
        (0..lines.len()).filter(|&i| lines[i].starts_with("@@ ")).collect();
    let context_lines: Vec<usize> = (0..lines.len())
        .filter(|&i| {
            lines[i].starts_with(' ') && hunk_headers.iter().any(|&h| h < i)
        })
        .collect();
    let body_lines: Vec<usize> = (0..lines.len())
        .filter(|&i| {
            hunk_headers.iter().any(|&h| h < i)
                && (lines[i].starts_with(' ')
                    || (lines[i].starts_with('-') && !lines[i].starts_with("--- "))
                    || (lines[i].starts_with('+') && !lines[i].starts_with("+++ ")))
        })
        .collect();
    let max_file_len = tree.values().map(|c| c.lines().count()).max().unwrap_or(0);

    for _ in 0..8 {
        match rng.gen_range(0..5u32) {
            // Inflate a declared count: body and header disagree.
            0 => {
                let h = hunk_headers[rng.gen_range(0..hunk_headers.len())];
                if let Some(rewritten) = bump_header_count(lines[h]) {
                    return splice_line(&lines, h, Some(&rewritten));
                }
            }
            // Mangle the header shape itself.
            1 => {
                let h = hunk_headers[rng.gen_range(0..hunk_headers.len())];
                let broken = lines[h].replacen("@@ -", "@@ ~", 1);
                return splice_line(&lines, h, Some(&broken));
            }
            // Drop a body line: counts can no longer balance.
            2 if !body_lines.is_empty() => {
                let i = body_lines[rng.gen_range(0..body_lines.len())];
                return splice_line(&lines, i, None);
            }
            // Poison a context line: it exists on both diff sides but in
            // no tree file (the alphabet below never appears in one).
            3 if !context_lines.is_empty() => {
                let i = context_lines[rng.gen_range(0..context_lines.len())];
                return splice_line(&lines, i, Some(" ≈corrupted-context≈"));
            }
            // Shift a hunk's stated positions beyond any file and the
            // search window combined.
            4 => {
                let h = hunk_headers[rng.gen_range(0..hunk_headers.len())];
                if let Some(rewritten) = jump_header(lines[h], max_file_len + 40) {
                    return splice_line(&lines, h, Some(&rewritten));
                }
            }
            _ => {}
        }
    }
    // Classes 0 and 1 are always applicable, so this is unreachable in
    // practice; fall back to a definite header mangle.
    let h = hunk_headers[0];
    splice_line(&lines, h, Some(&lines[h].replacen("@@ -", "@@ ~", 1)))
}

fn splice_line(lines: &[&str], at: usize, replacement: Option<&str>) -> String {
    let mut out = String::new();
    for (i, line) in lines.iter().enumerate() {
        if i == at {
            match replacement {
                Some(r) => {
                    out.push_str(r);
                    out.push('\n');
                }
                None => {}
            }
        } else {
            out.push_str(line);
            out.push('\n');
        }
    }
    out
}

fn parse_header(line: &str) -> Option<(usize, usize, usize, usize, String)> {
    let rest = line.strip_prefix("@@ -")?;
    let (ranges, trailer) = rest.split_once(" @@")?;
    let (old, new) = ranges.split_once(" +")?;
    let parse_range = |s: &str| -> Option<(usize, usize)> {
        match s.split_once(',') {
            Some((a, b)) => Some((a.parse().ok()?, b.parse().ok()?)),
            None => Some((s.parse().ok()?, 1)),
        }
    };
    let (os, ol) = parse_range(old)?;
    let (ns, nl) = parse_range(new)?;
    Some((os, ol, ns, nl, trailer.to_string()))
}

fn format_header(os: usize, ol: usize, ns: usize, nl: usize, trailer: &str) -> String {
    let range = |s: usize, l: usize| if l == 1 { format!("{s}") } else { format!("{s},{l}") };
    format!("@@ -{} +{} @@{}", range(os, ol), range(ns, nl), trailer)
}

fn bump_header_count(line: &str) -> Option<String> {
    let (os, ol, ns, nl, trailer) = parse_header(line)?;
    Some(format_header(os, ol + 1, ns, nl, &trailer))
}

fn jump_header(line: &str, jump: usize) -> Option<String> {
    let (os, ol, ns, nl, trailer) = parse_header(line)?;
    if ol == 0 {
        return None; // a pure insertion has no old side to mismatch
    }
    Some(format_header(os + jump, ol, ns + jump, nl, &trailer))
}

// ---------------------------------------------------------------------------
// Random corpora and the brute-force BM25 reference

/// Random corpus for retrieval equivalence tests: up to `max_docs`
/// documents over a bounded vocabulary, identifier compounds included.
pub fn random_corpus(rng: &mut impl Rng, max_docs: usize) -> BTreeMap<String, String> {
    let doc_count = rng.gen_range(1..=max_docs);
    let mut docs = BTreeMap::new();
    for i in 0..doc_count {
        let word_count = rng.gen_range(0..=60usize);
        let mut words = Vec::with_capacity(word_count);
        for _ in 0..word_count {
            let w = WORDS[rng.gen_range(0..WORDS.len())];
            match rng.gen_range(0..4u32) {
                0 => words.push(format!("{w}_{}", WORDS[rng.gen_range(0..WORDS.len())])),
                1 => words.push(format!("{}{w}2", WORDS[rng.gen_range(0..WORDS.len())])),
                _ => words.push(w.to_string()),
            }
        }
        docs.insert(format!("src/doc_{i:03}.c"), words.join(" "));
    }
    docs
}

pub fn random_query(rng: &mut impl Rng) -> String {
    let n = rng.gen_range(1..=6usize);
    let mut words = Vec::with_capacity(n);
    for _ in 0..n {
        if rng.gen_range(0..8u32) == 0 {
            words.push("absent_term".to_string());
        } else {
            words.push(WORDS[rng.gen_range(0..WORDS.len())].to_string());
        }
    }
    words.join(" ")
}

/// Direct-formula BM25 over raw documents: no inverted index, document
/// frequencies recomputed by scanning every document per term. Returns
/// (path, score) sorted by score descending, path ascending, truncated
/// to `k`, zero-score documents omitted.
pub fn brute_force_bm25(
    docs: &BTreeMap<String, String>,
    query: &str,
    k: usize,
    params: Bm25Params,
) -> Vec<(String, f64)> {
    let mut terms: Vec<String> = tokenize(query);
    terms.sort();
    terms.dedup();
    let tokenized: BTreeMap<&str, Vec<String>> =
        docs.iter().map(|(p, t)| (p.as_str(), tokenize(t))).collect();
    let n = docs.len() as f64;
    let total_len: usize = tokenized.values().map(Vec::len).sum();
    let avgdl = if docs.is_empty() { 0.0 } else { total_len as f64 / n };

    let mut scored = Vec::new();
    for (path, tokens) in &tokenized {
        let mut score = 0.0;
        let mut matched = false;
        for term in &terms {
            let tf = tokens.iter().filter(|t| *t == term).count();
            if tf == 0 {
                continue;
            }
            matched = true;
            let df = tokenized
                .values()
                .filter(|doc| doc.iter().any(|t| t == term))
                .count() as f64;
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            let tf = tf as f64;
            let dl = tokens.len() as f64;
            let norm = tf * (params.k1 + 1.0)
                / (tf + params.k1 * (1.0 - params.b + params.b * dl / avgdl));
            score += idf * norm;
        }
        if matched {
            scored.push((path.to_string(), score));
        }
    }
    scored.sort_by(|(pa, sa), (pb, sb)| {
        sb.partial_cmp(sa).expect("finite scores").then_with(|| pa.cmp(pb))
    });
    scored.truncate(k);
    scored
}
