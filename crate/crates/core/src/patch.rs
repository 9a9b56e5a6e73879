//! Unified-diff engine: extraction from raw model output, strict parsing,
//! rendering, and git-style application against an in-memory file tree.
//!
//! Parsing is deliberately strict — it is the gate that decides whether a
//! candidate patch counts as syntactically valid, so header or count errors
//! are never silently repaired. Application mirrors `git apply`: exact
//! context matching with a bounded positional search, and all-or-nothing
//! semantics across every file the patch touches.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;
use sha2::{Digest, Sha256};
use thiserror::Error;

/// In-memory workspace: path → file contents.
pub type Tree = BTreeMap<String, String>;

/// SHA-256 digest of a tree under a canonical encoding; used for
/// atomicity checks and artifact identity.
pub fn tree_digest(tree: &Tree) -> String {
    let mut hasher = Sha256::new();
    for (path, content) in tree {
        hasher.update((path.len() as u64).to_le_bytes());
        hasher.update(path.as_bytes());
        hasher.update((content.len() as u64).to_le_bytes());
        hasher.update(content.as_bytes());
    }
    let out = hasher.finalize();
    let mut s = String::with_capacity(64);
    for b in out {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LineOp {
    Context,
    Add,
    Del,
}

/// One line of a hunk body, stored without its leading marker byte.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiffLine {
    pub op: LineOp,
    pub text: String,
    /// Set when the line was followed by a `\ No newline at end of file`
    /// marker, i.e. it is the final line of its side and unterminated.
    pub no_newline: bool,
}

impl DiffLine {
    pub fn new(op: LineOp, text: impl Into<String>) -> Self {
        DiffLine { op, text: text.into(), no_newline: false }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hunk {
    pub old_start: usize,
    pub old_len: usize,
    pub new_start: usize,
    pub new_len: usize,
    /// Trailing text of the `@@` header (the enclosing-function heading).
    pub context_header: String,
    pub lines: Vec<DiffLine>,
}

impl Hunk {
    fn side_count(&self, keep: fn(LineOp) -> bool) -> usize {
        self.lines.iter().filter(|l| keep(l.op)).count()
    }

    pub fn old_side(&self) -> impl Iterator<Item = &DiffLine> {
        self.lines.iter().filter(|l| matches!(l.op, LineOp::Context | LineOp::Del))
    }

    pub fn new_side(&self) -> impl Iterator<Item = &DiffLine> {
        self.lines.iter().filter(|l| matches!(l.op, LineOp::Context | LineOp::Add))
    }
}

/// One file's worth of changes. `None` on a side stands for `/dev/null`,
/// so `old_path: None` is a file creation and `new_path: None` a deletion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiffFile {
    pub old_path: Option<String>,
    pub new_path: Option<String>,
    pub hunks: Vec<Hunk>,
}

impl DiffFile {
    /// Post-image path (old path for deletions).
    pub fn target_path(&self) -> &str {
        self.new_path.as_deref().or(self.old_path.as_deref()).unwrap_or("")
    }

    pub fn is_creation(&self) -> bool {
        self.old_path.is_none()
    }

    pub fn is_deletion(&self) -> bool {
        self.new_path.is_none()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PatchParseError {
    #[error("malformed diff at line {line_no}: {reason}")]
    MalformedDiff { line_no: usize, reason: String },
}

fn malformed(line_no: usize, reason: impl Into<String>) -> PatchParseError {
    PatchParseError::MalformedDiff { line_no, reason: reason.into() }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExtractError {
    #[error("no patch found in model output")]
    NoPatchFound,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PatchApplyError {
    #[error("hunk {hunk_index} does not apply to {file}")]
    HunkMismatch { file: String, hunk_index: usize },
    #[error("target file missing: {file}")]
    MissingFile { file: String },
    #[error("patch already applied to {file}")]
    AlreadyApplied { file: String },
}

// ---------------------------------------------------------------------------
// Extraction

/// Pull the patch text out of raw model output.
///
/// Precedence: the first `<patch>…</patch>` block (running to end of input
/// when unclosed), otherwise the first line that looks like the start of a
/// unified diff. Line endings are normalized to `\n`.
pub fn extract_patch(raw: &str) -> Result<String, ExtractError> {
    let text = normalize_newlines(raw);
    if let Some(open) = text.find("<patch>") {
        let body_start = open + "<patch>".len();
        let body = match text[body_start..].find("</patch>") {
            Some(close) => &text[body_start..body_start + close],
            None => &text[body_start..],
        };
        let body = body.strip_prefix('\n').unwrap_or(body);
        if body.trim().is_empty() {
            return Err(ExtractError::NoPatchFound);
        }
        return Ok(ensure_trailing_newline(body));
    }
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let bare = line.strip_suffix('\n').unwrap_or(line);
        if bare.starts_with("diff --git ")
            || bare.starts_with("--- a/")
            || bare.starts_with("--- /dev/null")
        {
            return Ok(ensure_trailing_newline(&text[offset..]));
        }
        offset += line.len();
    }
    Err(ExtractError::NoPatchFound)
}

fn normalize_newlines(s: &str) -> String {
    s.replace("\r\n", "\n").replace('\r', "\n")
}

fn ensure_trailing_newline(s: &str) -> String {
    if s.is_empty() || s.ends_with('\n') {
        s.to_string()
    } else {
        format!("{s}\n")
    }
}

// ---------------------------------------------------------------------------
// Parsing

static HUNK_HEADER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@(.*)$").expect("static regex")
});

const META_PREFIXES: [&str; 10] = [
    "index ",
    "old mode ",
    "new mode ",
    "new file mode ",
    "deleted file mode ",
    "similarity index ",
    "dissimilarity index ",
    "rename from ",
    "rename to ",
    "mode ",
];

/// Strictly parse a unified diff into per-file changes.
///
/// Any header malformation, hunk-count inconsistency, or stray content is
/// an error; nothing is repaired or recounted.
pub fn parse(patch: &str) -> Result<Vec<DiffFile>, PatchParseError> {
    let text = normalize_newlines(patch);
    let lines: Vec<&str> = text.split('\n').collect();
    // split('\n') leaves one trailing "" when the text ends with \n.
    let mut pos = 0usize;
    let mut files = Vec::new();

    while pos < lines.len() {
        if lines[pos].is_empty() && lines[pos + 1..].iter().all(|l| l.is_empty()) {
            break; // trailing blank lines after the last hunk
        }
        let file = parse_file(&lines, &mut pos)?;
        files.push(file);
    }
    if files.is_empty() {
        return Err(malformed(1, "empty patch"));
    }
    Ok(files)
}

fn parse_file(lines: &[&str], pos: &mut usize) -> Result<DiffFile, PatchParseError> {
    let start = *pos;
    let line = lines[start];
    if line.starts_with("Binary files ") || line.starts_with("GIT binary patch") {
        return Err(malformed(start + 1, "binary diffs are not supported"));
    }
    if line.starts_with("diff --git ") {
        *pos += 1;
        // Skip extended header lines; paths are taken from ---/+++ below.
        while *pos < lines.len() && META_PREFIXES.iter().any(|p| lines[*pos].starts_with(p)) {
            *pos += 1;
        }
        if *pos < lines.len()
            && (lines[*pos].starts_with("Binary files ")
                || lines[*pos].starts_with("GIT binary patch"))
        {
            return Err(malformed(*pos + 1, "binary diffs are not supported"));
        }
    } else if !line.starts_with("--- ") {
        return Err(malformed(start + 1, "expected a file header (`diff --git` or `--- `)"));
    }

    let old_line = *pos;
    let old_path = match lines.get(old_line) {
        Some(l) if l.starts_with("--- ") => parse_header_path(&l[4..], "a/"),
        _ => return Err(malformed(old_line + 1, "expected `--- ` old-file header")),
    };
    let new_line = old_line + 1;
    let new_path = match lines.get(new_line) {
        Some(l) if l.starts_with("+++ ") => parse_header_path(&l[4..], "b/"),
        _ => return Err(malformed(new_line + 1, "expected `+++ ` new-file header")),
    };
    if old_path.is_none() && new_path.is_none() {
        return Err(malformed(old_line + 1, "both sides are /dev/null"));
    }
    *pos = new_line + 1;

    let mut hunks = Vec::new();
    while *pos < lines.len() && lines[*pos].starts_with("@@") {
        hunks.push(parse_hunk(lines, pos)?);
    }
    if hunks.is_empty() {
        return Err(malformed(*pos + 1, "file entry has no hunks"));
    }
    validate_file_shape(lines.len(), &old_path, &new_path, &hunks)?;
    Ok(DiffFile { old_path, new_path, hunks })
}

fn parse_header_path(raw: &str, prefix: &str) -> Option<String> {
    // Timestamps after a tab are legal in unified diffs; drop them.
    let path = raw.split('\t').next().unwrap_or(raw);
    if path == "/dev/null" {
        return None;
    }
    Some(path.strip_prefix(prefix).unwrap_or(path).to_string())
}

fn parse_hunk(lines: &[&str], pos: &mut usize) -> Result<Hunk, PatchParseError> {
    let header_no = *pos + 1;
    let caps = HUNK_HEADER
        .captures(lines[*pos])
        .ok_or_else(|| malformed(header_no, "malformed hunk header"))?;
    let old_start: usize = caps[1].parse().map_err(|_| malformed(header_no, "bad hunk range"))?;
    let old_len: usize =
        caps.get(2).map_or(Ok(1), |m| m.as_str().parse()).map_err(|_| malformed(header_no, "bad hunk range"))?;
    let new_start: usize = caps[3].parse().map_err(|_| malformed(header_no, "bad hunk range"))?;
    let new_len: usize =
        caps.get(4).map_or(Ok(1), |m| m.as_str().parse()).map_err(|_| malformed(header_no, "bad hunk range"))?;
    let trailer = &caps[5];
    let context_header = if trailer.is_empty() {
        String::new()
    } else if let Some(rest) = trailer.strip_prefix(' ') {
        rest.to_string()
    } else {
        return Err(malformed(header_no, "malformed hunk header"));
    };
    if old_start == 0 && old_len != 0 {
        return Err(malformed(header_no, "old range starts at 0 but is non-empty"));
    }
    if new_start == 0 && new_len != 0 {
        return Err(malformed(header_no, "new range starts at 0 but is non-empty"));
    }
    *pos += 1;

    let mut body = Vec::new();
    let mut old_left = old_len;
    let mut new_left = new_len;
    while old_left > 0 || new_left > 0 {
        let line_no = *pos + 1;
        let raw = *lines
            .get(*pos)
            .ok_or_else(|| malformed(line_no, "hunk truncated before declared line counts"))?;
        let (op, text) = if raw.is_empty() {
            // Tolerated like git apply: an empty line is an empty context line.
            (LineOp::Context, "")
        } else {
            match raw.as_bytes()[0] {
                b' ' => (LineOp::Context, &raw[1..]),
                b'+' => (LineOp::Add, &raw[1..]),
                b'-' => (LineOp::Del, &raw[1..]),
                b'\\' => {
                    let last: &mut DiffLine = body
                        .last_mut()
                        .ok_or_else(|| malformed(line_no, "newline marker before any hunk line"))?;
                    last.no_newline = true;
                    *pos += 1;
                    continue;
                }
                _ => {
                    return Err(malformed(
                        line_no,
                        "hunk line must begin with ' ', '+', '-', or '\\'",
                    ))
                }
            }
        };
        match op {
            LineOp::Context => {
                if old_left == 0 || new_left == 0 {
                    return Err(malformed(line_no, "hunk has more lines than its header declares"));
                }
                old_left -= 1;
                new_left -= 1;
            }
            LineOp::Del => {
                if old_left == 0 {
                    return Err(malformed(line_no, "hunk has more lines than its header declares"));
                }
                old_left -= 1;
            }
            LineOp::Add => {
                if new_left == 0 {
                    return Err(malformed(line_no, "hunk has more lines than its header declares"));
                }
                new_left -= 1;
            }
        }
        body.push(DiffLine { op, text: text.to_string(), no_newline: false });
        *pos += 1;
    }
    // A trailing `\ No newline` marker for the final body line.
    if *pos < lines.len() && lines[*pos].starts_with('\\') {
        if let Some(last) = body.last_mut() {
            last.no_newline = true;
        }
        *pos += 1;
    }
    Ok(Hunk { old_start, old_len, new_start, new_len, context_header, lines: body })
}

fn validate_file_shape(
    end_line: usize,
    old_path: &Option<String>,
    new_path: &Option<String>,
    hunks: &[Hunk],
) -> Result<(), PatchParseError> {
    // Counts were enforced during body parsing; re-assert the derived shape.
    for hunk in hunks {
        debug_assert_eq!(hunk.side_count(|op| op != LineOp::Add), hunk.old_len);
        debug_assert_eq!(hunk.side_count(|op| op != LineOp::Del), hunk.new_len);
    }
    if old_path.is_none() {
        if hunks.len() != 1 || hunks[0].lines.iter().any(|l| l.op != LineOp::Add) {
            return Err(malformed(end_line, "file creation must be a single all-addition hunk"));
        }
    }
    if new_path.is_none() && hunks.iter().any(|h| h.lines.iter().any(|l| l.op == LineOp::Add)) {
        return Err(malformed(end_line, "file deletion cannot add lines"));
    }
    let mut prev_end: Option<usize> = None;
    for hunk in hunks {
        let begin = hunk.old_start;
        if let Some(end) = prev_end {
            if begin <= end {
                return Err(malformed(end_line, "hunks overlap or are out of order"));
            }
        }
        // For a pure insertion, old_start is the line the hunk follows.
        let this_end =
            if hunk.old_len == 0 { hunk.old_start } else { hunk.old_start + hunk.old_len - 1 };
        prev_end = Some(this_end);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Rendering

/// Render parsed changes back to git-style unified diff text.
pub fn render(files: &[DiffFile]) -> String {
    let mut out = String::new();
    for file in files {
        let a_name = file.old_path.as_deref().or(file.new_path.as_deref()).unwrap_or("");
        let b_name = file.new_path.as_deref().or(file.old_path.as_deref()).unwrap_or("");
        out.push_str(&format!("diff --git a/{a_name} b/{b_name}\n"));
        match &file.old_path {
            Some(p) => out.push_str(&format!("--- a/{p}\n")),
            None => out.push_str("--- /dev/null\n"),
        }
        match &file.new_path {
            Some(p) => out.push_str(&format!("+++ b/{p}\n")),
            None => out.push_str("+++ /dev/null\n"),
        }
        for hunk in &file.hunks {
            out.push_str(&format!(
                "@@ -{} +{} @@",
                render_range(hunk.old_start, hunk.old_len),
                render_range(hunk.new_start, hunk.new_len)
            ));
            if !hunk.context_header.is_empty() {
                out.push(' ');
                out.push_str(&hunk.context_header);
            }
            out.push('\n');
            for line in &hunk.lines {
                let marker = match line.op {
                    LineOp::Context => ' ',
                    LineOp::Add => '+',
                    LineOp::Del => '-',
                };
                out.push(marker);
                out.push_str(&line.text);
                out.push('\n');
                if line.no_newline {
                    out.push_str("\\ No newline at end of file\n");
                }
            }
        }
    }
    out
}

fn render_range(start: usize, len: usize) -> String {
    if len == 1 {
        format!("{start}")
    } else {
        format!("{start},{len}")
    }
}

// ---------------------------------------------------------------------------
// Application

/// How far from the stated position a hunk may land (exact-context search).
pub const FUZZ_WINDOW: i64 = 20;

struct FileLines {
    lines: Vec<String>,
    trailing_newline: bool,
}

fn split_lines(content: &str) -> FileLines {
    if content.is_empty() {
        return FileLines { lines: Vec::new(), trailing_newline: true };
    }
    let trailing_newline = content.ends_with('\n');
    let body = if trailing_newline { &content[..content.len() - 1] } else { content };
    FileLines { lines: body.split('\n').map(String::from).collect(), trailing_newline }
}

fn join_lines(file: &FileLines) -> String {
    let mut s = file.lines.join("\n");
    if file.trailing_newline && !file.lines.is_empty() {
        s.push('\n');
    }
    s
}

/// Apply parsed changes to `tree` with all-or-nothing semantics; on any
/// error the tree is left byte-identical to its pre-call state. Returns
/// the paths that were created, modified, or deleted.
pub fn apply(tree: &mut Tree, files: &[DiffFile]) -> Result<Vec<String>, PatchApplyError> {
    let mut staged = tree.clone();
    let mut changed = Vec::new();
    for file in files {
        apply_file(&mut staged, file)?;
        changed.push(file.target_path().to_string());
    }
    *tree = staged;
    Ok(changed)
}

fn apply_file(tree: &mut Tree, file: &DiffFile) -> Result<(), PatchApplyError> {
    let target = file.target_path().to_string();
    if file.is_creation() {
        let new_content = side_content(&file.hunks[0], LineOp::Del);
        return match tree.get(&target) {
            None => {
                tree.insert(target, new_content);
                Ok(())
            }
            Some(existing) if *existing == new_content => {
                Err(PatchApplyError::AlreadyApplied { file: target })
            }
            Some(_) => Err(PatchApplyError::HunkMismatch { file: target, hunk_index: 0 }),
        };
    }
    let old_name = file.old_path.clone().expect("non-creation has an old path");
    if file.is_deletion() {
        // Deletions go through the same positional matching as edits; a
        // deletion diff must consume the file completely.
        let content = match tree.get(&old_name) {
            None => return Err(PatchApplyError::AlreadyApplied { file: old_name }),
            Some(c) => c.clone(),
        };
        let mut cur = split_lines(&content);
        return match apply_hunks(&mut cur, &file.hunks) {
            Ok(()) if cur.lines.is_empty() => {
                tree.remove(&old_name);
                Ok(())
            }
            Ok(()) => Err(PatchApplyError::HunkMismatch { file: old_name, hunk_index: 0 }),
            Err(hunk_index) => Err(PatchApplyError::HunkMismatch { file: old_name, hunk_index }),
        };
    }

    let content = match tree.get(&old_name) {
        Some(c) => c.clone(),
        None => return Err(PatchApplyError::MissingFile { file: old_name }),
    };
    let mut cur = split_lines(&content);
    match apply_hunks(&mut cur, &file.hunks) {
        Ok(()) => {}
        Err(hunk_index) => {
            let original = split_lines(&content);
            return if already_applied(&original, &file.hunks) {
                Err(PatchApplyError::AlreadyApplied { file: old_name })
            } else {
                Err(PatchApplyError::HunkMismatch { file: old_name, hunk_index })
            };
        }
    }
    let new_content = join_lines(&cur);
    if old_name != target {
        tree.remove(&old_name);
    }
    tree.insert(target, new_content);
    Ok(())
}

/// Concatenated content of one hunk side (the side NOT matching `skip`).
fn side_content(hunk: &Hunk, skip: LineOp) -> String {
    let mut out = String::new();
    let lines: Vec<&DiffLine> = hunk.lines.iter().filter(|l| l.op != skip).collect();
    for (i, line) in lines.iter().enumerate() {
        out.push_str(&line.text);
        if !(i == lines.len() - 1 && line.no_newline) {
            out.push('\n');
        }
    }
    out
}

fn apply_hunks(cur: &mut FileLines, hunks: &[Hunk]) -> Result<(), usize> {
    let mut shift: i64 = 0;
    for (index, hunk) in hunks.iter().enumerate() {
        let base = if hunk.old_len == 0 {
            hunk.old_start as i64 // insertion point is *after* this line
        } else {
            hunk.old_start as i64 - 1
        };
        let expected = base + shift;
        let found = find_offset(cur, hunk, expected, LineOp::Add).ok_or(index)?;
        let at = (expected + found) as usize;
        splice_hunk(cur, hunk, at);
        shift += found + hunk.new_len as i64 - hunk.old_len as i64;
    }
    Ok(())
}

/// Search offsets 0, +1, −1, … ±FUZZ_WINDOW for a position where the
/// hunk's side (old side when `skip` = Add) matches exactly.
fn find_offset(cur: &FileLines, hunk: &Hunk, expected: i64, skip: LineOp) -> Option<i64> {
    let side: Vec<&DiffLine> = hunk.lines.iter().filter(|l| l.op != skip).collect();
    if side.is_empty() {
        // Nothing to anchor on; accept the stated position when in range.
        return (expected >= 0 && expected as usize <= cur.lines.len()).then_some(0);
    }
    for magnitude in 0..=FUZZ_WINDOW {
        for sign in [1i64, -1] {
            if magnitude == 0 && sign < 0 {
                continue;
            }
            let offset = magnitude * sign;
            let at = expected + offset;
            if at < 0 {
                continue;
            }
            let at = at as usize;
            if at + side.len() > cur.lines.len() {
                continue;
            }
            if side_matches(cur, &side, at) {
                return Some(offset);
            }
        }
    }
    None
}

fn side_matches(cur: &FileLines, side: &[&DiffLine], at: usize) -> bool {
    for (i, line) in side.iter().enumerate() {
        if cur.lines[at + i] != line.text {
            return false;
        }
        let is_last_of_side = i == side.len() - 1;
        if line.no_newline && !is_last_of_side {
            return false;
        }
    }
    // When the side reaches end of file, its newline state must agree.
    let reaches_eof = at + side.len() == cur.lines.len();
    let ends_unterminated = side.last().is_some_and(|l| l.no_newline);
    if ends_unterminated && (!reaches_eof || cur.trailing_newline) {
        return false;
    }
    if reaches_eof && !ends_unterminated && !cur.trailing_newline {
        return false;
    }
    true
}

fn splice_hunk(cur: &mut FileLines, hunk: &Hunk, at: usize) {
    let new_side: Vec<&DiffLine> = hunk.lines.iter().filter(|l| l.op != LineOp::Del).collect();
    let replacement: Vec<String> = new_side.iter().map(|l| l.text.clone()).collect();
    let new_len = replacement.len();
    cur.lines.splice(at..at + hunk.old_len, replacement);
    if at + new_len == cur.lines.len() {
        // Hunk's new side now forms the end of file; adopt its termination.
        cur.trailing_newline = match new_side.last() {
            Some(last) => !last.no_newline,
            None => true, // tail removed entirely; preceding lines were terminated
        };
    }
}

/// True when every hunk's new side is already present near its stated
/// position — the signature of a patch applied earlier.
fn already_applied(original: &FileLines, hunks: &[Hunk]) -> bool {
    let mut shift: i64 = 0;
    for hunk in hunks {
        if hunk.new_len == 0 {
            // A pure deletion leaves nothing to probe for; absence of the
            // old lines is indistinguishable from a never-present line,
            // which must stay a mismatch.
            return false;
        }
        let base = hunk.new_start as i64 - 1;
        let expected = base + shift;
        match find_offset(original, hunk, expected, LineOp::Del) {
            Some(found) => shift += found,
            None => return false,
        }
    }
    true
}

// ---------------------------------------------------------------------------
// Context-header helpers

/// Best-effort function name from a hunk context header, e.g.
/// `static int foo_open(struct inode *i)` → `foo_open`.
pub fn context_function_name(header: &str) -> Option<String> {
    let header = header.trim();
    if header.is_empty() {
        return None;
    }
    let ident_end = match header.find('(') {
        Some(paren) => paren,
        None => header.len(),
    };
    let head = &header[..ident_end];
    let name: String = head
        .chars()
        .rev()
        .skip_while(|c| !c.is_ascii_alphanumeric() && *c != '_')
        .take_while(|c| c.is_ascii_alphanumeric() || *c == '_')
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    if name.is_empty() || name.chars().next().is_some_and(|c| c.is_ascii_digit()) {
        None
    } else {
        Some(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = concat!(
        "diff --git a/fs/foo.c b/fs/foo.c\n",
        "--- a/fs/foo.c\n",
        "+++ b/fs/foo.c\n",
        "@@ -2,3 +2,3 @@ static int foo_open(struct inode *inode)\n",
        " \tif (!inode)\n",
        "-\t\treturn 0;\n",
        "+\t\treturn -EINVAL;\n",
        " \treturn generic_open(inode);\n",
    );

    fn basic_tree() -> Tree {
        let mut tree = Tree::new();
        tree.insert(
            "fs/foo.c".to_string(),
            "int x;\n\tif (!inode)\n\t\treturn 0;\n\treturn generic_open(inode);\nint y;\n"
                .to_string(),
        );
        tree
    }

    #[test]
    fn parses_git_style_diff() {
        let files = parse(BASIC).unwrap();
        assert_eq!(files.len(), 1);
        let f = &files[0];
        assert_eq!(f.old_path.as_deref(), Some("fs/foo.c"));
        assert_eq!(f.new_path.as_deref(), Some("fs/foo.c"));
        assert_eq!(f.hunks.len(), 1);
        let h = &f.hunks[0];
        assert_eq!((h.old_start, h.old_len, h.new_start, h.new_len), (2, 3, 2, 3));
        assert_eq!(h.context_header, "static int foo_open(struct inode *inode)");
        assert_eq!(h.lines.len(), 4);
    }

    #[test]
    fn parse_render_round_trips() {
        let files = parse(BASIC).unwrap();
        let rendered = render(&files);
        assert_eq!(parse(&rendered).unwrap(), files);
    }

    #[test]
    fn parses_headers_without_prefixes_and_omitted_counts() {
        let text = concat!(
            "--- fs/foo.c\n",
            "+++ fs/foo.c\n",
            "@@ -1 +1 @@\n",
            "-old\n",
            "+new\n",
        );
        let files = parse(text).unwrap();
        assert_eq!(files[0].old_path.as_deref(), Some("fs/foo.c"));
        let h = &files[0].hunks[0];
        assert_eq!((h.old_start, h.old_len, h.new_start, h.new_len), (1, 1, 1, 1));
    }

    #[test]
    fn rejects_empty_and_prose() {
        assert!(matches!(parse(""), Err(PatchParseError::MalformedDiff { line_no: 1, .. })));
        assert!(parse("hello world\n").is_err());
    }

    #[test]
    fn rejects_count_mismatch() {
        let text = concat!(
            "--- a/f\n",
            "+++ b/f\n",
            "@@ -1,3 +1,1 @@\n",
            "-a\n",
            "-b\n",
            "+c\n",
        );
        // old side has 2 lines but the header declares 3
        let err = parse(text).unwrap_err();
        let PatchParseError::MalformedDiff { reason, .. } = err;
        assert!(reason.contains("truncated") || reason.contains("declares"), "{reason}");
    }

    #[test]
    fn rejects_overclaimed_lines() {
        let text = concat!(
            "--- a/f\n",
            "+++ b/f\n",
            "@@ -1,1 +1,1 @@\n",
            "-a\n",
            "-b\n",
            "+c\n",
        );
        assert!(parse(text).is_err());
    }

    #[test]
    fn rejects_prefixless_context_lines() {
        let text = concat!(
            "--- a/f\n",
            "+++ b/f\n",
            "@@ -1,2 +1,2 @@\n",
            "context without marker\n",
            "-a\n",
            "+b\n",
        );
        assert!(parse(text).is_err());
    }

    #[test]
    fn empty_line_is_empty_context() {
        let text = concat!(
            "--- a/f\n",
            "+++ b/f\n",
            "@@ -1,3 +1,3 @@\n",
            " a\n",
            "\n",
            "-b\n",
            "+c\n",
        );
        let files = parse(text).unwrap();
        let h = &files[0].hunks[0];
        assert_eq!(h.lines[1], DiffLine::new(LineOp::Context, ""));
    }

    #[test]
    fn applies_cleanly_and_reports_changed_paths() {
        let mut tree = basic_tree();
        let files = parse(BASIC).unwrap();
        let changed = apply(&mut tree, &files).unwrap();
        assert_eq!(changed, vec!["fs/foo.c".to_string()]);
        assert!(tree["fs/foo.c"].contains("return -EINVAL;"));
        assert!(!tree["fs/foo.c"].contains("return 0;"));
    }

    #[test]
    fn applies_with_positional_drift() {
        let mut tree = basic_tree();
        let shifted = tree["fs/foo.c"].replace("int x;\n", "int x;\nint z;\nint w;\n");
        tree.insert("fs/foo.c".to_string(), shifted);
        let files = parse(BASIC).unwrap();
        apply(&mut tree, &files).unwrap();
        assert!(tree["fs/foo.c"].contains("return -EINVAL;"));
    }

    #[test]
    fn second_apply_is_already_applied() {
        let mut tree = basic_tree();
        let files = parse(BASIC).unwrap();
        apply(&mut tree, &files).unwrap();
        let err = apply(&mut tree, &files).unwrap_err();
        assert!(matches!(err, PatchApplyError::AlreadyApplied { .. }), "{err:?}");
    }

    #[test]
    fn mismatch_rolls_back_every_file() {
        let mut tree = basic_tree();
        tree.insert("fs/bar.c".to_string(), "one\ntwo\n".to_string());
        let two_file = concat!(
            "--- a/fs/bar.c\n",
            "+++ b/fs/bar.c\n",
            "@@ -1,2 +1,2 @@\n",
            " one\n",
            "-two\n",
            "+2\n",
            "--- a/fs/foo.c\n",
            "+++ b/fs/foo.c\n",
            "@@ -1,1 +1,1 @@\n",
            "-does not exist anywhere\n",
            "+replacement\n",
        );
        let before = tree_digest(&tree);
        let files = parse(two_file).unwrap();
        let err = apply(&mut tree, &files).unwrap_err();
        assert!(matches!(err, PatchApplyError::HunkMismatch { ref file, .. } if file == "fs/foo.c"));
        assert_eq!(tree_digest(&tree), before);
    }

    #[test]
    fn missing_target_file() {
        let mut tree = Tree::new();
        let files = parse(BASIC).unwrap();
        let err = apply(&mut tree, &files).unwrap_err();
        assert!(matches!(err, PatchApplyError::MissingFile { ref file } if file == "fs/foo.c"));
    }

    #[test]
    fn creation_and_deletion_round_trip() {
        let create = concat!(
            "--- /dev/null\n",
            "+++ b/docs/new.txt\n",
            "@@ -0,0 +1,2 @@\n",
            "+hello\n",
            "+world\n",
        );
        let mut tree = Tree::new();
        let files = parse(create).unwrap();
        assert!(files[0].is_creation());
        apply(&mut tree, &files).unwrap();
        assert_eq!(tree["docs/new.txt"], "hello\nworld\n");
        assert!(matches!(
            apply(&mut tree, &files).unwrap_err(),
            PatchApplyError::AlreadyApplied { .. }
        ));

        let delete = concat!(
            "--- a/docs/new.txt\n",
            "+++ /dev/null\n",
            "@@ -1,2 +0,0 @@\n",
            "-hello\n",
            "-world\n",
        );
        let files = parse(delete).unwrap();
        assert!(files[0].is_deletion());
        apply(&mut tree, &files).unwrap();
        assert!(tree.is_empty());
        assert!(matches!(
            apply(&mut tree, &files).unwrap_err(),
            PatchApplyError::AlreadyApplied { .. }
        ));
    }

    #[test]
    fn no_newline_marker_round_trips_through_apply() {
        let mut tree = Tree::new();
        tree.insert("f".to_string(), "a\nend".to_string());
        let text = concat!(
            "--- a/f\n",
            "+++ b/f\n",
            "@@ -1,2 +1,2 @@\n",
            " a\n",
            "-end\n",
            "\\ No newline at end of file\n",
            "+end!\n",
            "\\ No newline at end of file\n",
        );
        let files = parse(text).unwrap();
        assert!(files[0].hunks[0].lines[1].no_newline);
        assert!(files[0].hunks[0].lines[2].no_newline);
        apply(&mut tree, &files).unwrap();
        assert_eq!(tree["f"], "a\nend!");
        let rendered = render(&files);
        assert_eq!(parse(&rendered).unwrap(), files);
    }

    #[test]
    fn terminated_file_rejects_unterminated_old_side() {
        let mut tree = Tree::new();
        tree.insert("f".to_string(), "a\nend\n".to_string());
        let text = concat!(
            "--- a/f\n",
            "+++ b/f\n",
            "@@ -1,2 +1,2 @@\n",
            " a\n",
            "-end\n",
            "\\ No newline at end of file\n",
            "+end!\n",
        );
        let files = parse(text).unwrap();
        assert!(apply(&mut tree, &files).is_err());
    }

    #[test]
    fn extraction_precedence() {
        let tagged = format!("Sure, here is the fix:\n<patch>\n{BASIC}</patch>\nHope it helps!");
        assert_eq!(extract_patch(&tagged).unwrap(), BASIC);

        let unclosed = format!("<patch>\n{BASIC}");
        assert_eq!(extract_patch(&unclosed).unwrap(), BASIC);

        let bare = format!("The patch below fixes it.\n\n{BASIC}");
        assert_eq!(extract_patch(&bare).unwrap(), BASIC);

        assert_eq!(extract_patch("no diff here\n"), Err(ExtractError::NoPatchFound));
        assert_eq!(extract_patch("<patch>\n</patch>"), Err(ExtractError::NoPatchFound));
    }

    #[test]
    fn extraction_normalizes_crlf() {
        let crlf = BASIC.replace('\n', "\r\n");
        let wrapped = format!("<patch>\r\n{crlf}</patch>");
        assert_eq!(extract_patch(&wrapped).unwrap(), BASIC);
    }

    #[test]
    fn context_function_names() {
        assert_eq!(
            context_function_name("static int foo_open(struct inode *inode)").as_deref(),
            Some("foo_open")
        );
        assert_eq!(context_function_name("void bar(void)").as_deref(), Some("bar"));
        assert_eq!(context_function_name("struct ops my_ops = {").as_deref(), Some("my_ops"));
        assert_eq!(context_function_name(""), None);
    }

    #[test]
    fn hunk_order_is_enforced() {
        let text = concat!(
            "--- a/f\n",
            "+++ b/f\n",
            "@@ -10,1 +10,1 @@\n",
            "-a\n",
            "+b\n",
            "@@ -5,1 +5,1 @@\n",
            "-c\n",
            "+d\n",
        );
        assert!(parse(text).is_err());
    }
}
