//! The small end-to-end corpus: a mock repository, raw bug records, and
//! recorded model outputs sized so a full curate → campaign → evaluate
//! cycle runs in seconds.
//!
//! 23 raw records; three are deliberately broken — one whose bug commit
//! never crashes, one whose fix parent never crashes, one whose fix
//! still crashes — so curation demonstrates each rejection check. Of
//! the 20 curated bugs, the first five ship a gold patch in their
//! recorded output and resolve; the other fifteen ship prose only.

use std::collections::BTreeMap;

use crashgym_core::model::{BugId, Reproducer, ReproducerKind};
use crashgym_core::patch;
use crashgym_platform::curator::{RawBugRecord, RawMetadata};
use crashgym_platform::gitstore::{RepoCommit, RepoFile};
use serde_json::json;

use crate::design;

pub const RAW_COUNT: usize = 23;
pub const CURATED: usize = 20;
pub const SOLVED: usize = 5;

/// Raw records whose designed defect trips curation check 1, 2, or 3.
pub const REJECT_CHECK1: usize = 20;
pub const REJECT_CHECK2: usize = 21;
pub const REJECT_CHECK3: usize = 22;

pub fn bug_id(i: usize) -> BugId {
    BugId(format!("mini-{i:02}"))
}

fn file_path(i: usize) -> String {
    format!("drivers/mini/m{i:02}.c")
}

fn behavior_json(i: usize) -> String {
    json!({
        "crash_probability": 1.0,
        "crash_delay_s": 20.0,
        "crash_title": format!("KASAN: use-after-free Read in mini{i:02}_poll"),
        "frames": [
            format!("mini{i:02}_poll+0x88/0x210 {}:11", file_path(i)),
            "kasan_report+0x4b/0x180 mm/kasan/report.c:601",
            "do_syscall_64+0x39/0xb0 arch/x86/entry/common.c:50",
        ],
        "log_lines": 3,
    })
    .to_string()
}

fn marker_line(i: usize) -> String {
    format!("\t// BUG(mini-{i:02}): {}", behavior_json(i))
}

fn source(i: usize, middle: &str) -> String {
    format!(
        "// drivers/mini/m{i:02}.c\n\
         #include <mini/core.h>\n\
         \n\
         static int mini{i:02}_open(struct mini_dev *dev)\n\
         {{\n\
         \treturn mini_ready(dev);\n\
         }}\n\
         \n\
         static int mini{i:02}_poll(struct mini_dev *dev)\n\
         {{\n\
         \tint ret = 0;\n\
         {middle}\
         \tret = mini_wait(dev);\n\
         \treturn ret;\n\
         }}\n"
    )
}

fn buggy(i: usize) -> String {
    source(i, &format!("{}\n", marker_line(i)))
}

fn pristine(i: usize) -> String {
    source(i, "")
}

fn fixed(i: usize) -> String {
    source(i, "\tmini_guard(dev);\n")
}

pub fn gold_fix(i: usize) -> String {
    use crashgym_core::patch::{DiffFile, DiffLine, Hunk, LineOp};
    let file = DiffFile {
        old_path: Some(file_path(i)),
        new_path: Some(file_path(i)),
        hunks: vec![Hunk {
            old_start: 11,
            old_len: 4,
            new_start: 11,
            new_len: 4,
            context_header: format!("static int mini{i:02}_poll(struct mini_dev *dev)"),
            lines: vec![
                DiffLine::new(LineOp::Context, "\tint ret = 0;"),
                DiffLine::new(LineOp::Del, marker_line(i)),
                DiffLine::new(LineOp::Add, "\tmini_guard(dev);"),
                DiffLine::new(LineOp::Context, "\tret = mini_wait(dev);"),
                DiffLine::new(LineOp::Context, "\treturn ret;"),
            ],
        }],
    };
    patch::render(&[file])
}

/// Four commits per bug: pristine base, bug introduction, the fix's
/// parent (still buggy), and the fix merge.
pub fn repo() -> RepoFile {
    let mut commits = Vec::new();
    for i in 0..RAW_COUNT {
        let tree = |content: String| -> BTreeMap<String, String> {
            [(file_path(i), content)].into()
        };
        let base = design::commit("mini-base", i);
        let bug = design::commit("mini-bug", i);
        let parent = design::commit("mini-parent", i);
        let fix = design::commit("mini-fix", i);
        let bug_content = if i == REJECT_CHECK1 { pristine(i) } else { buggy(i) };
        let parent_content = if i == REJECT_CHECK2 { pristine(i) } else { buggy(i) };
        let fix_content = if i == REJECT_CHECK3 { buggy(i) } else { fixed(i) };
        commits.push(RepoCommit {
            id: base.as_str().to_string(),
            parents: vec![],
            tree: tree(pristine(i)),
        });
        commits.push(RepoCommit {
            id: bug.as_str().to_string(),
            parents: vec![base.as_str().to_string()],
            tree: tree(bug_content),
        });
        commits.push(RepoCommit {
            id: parent.as_str().to_string(),
            parents: vec![bug.as_str().to_string()],
            tree: tree(parent_content),
        });
        commits.push(RepoCommit {
            id: fix.as_str().to_string(),
            parents: vec![parent.as_str().to_string(), base.as_str().to_string()],
            tree: tree(fix_content),
        });
    }
    RepoFile { commits }
}

pub fn raws() -> Vec<RawBugRecord> {
    (0..RAW_COUNT)
        .map(|i| RawBugRecord {
            bug_id: bug_id(i),
            commit_bug: design::commit("mini-bug", i),
            commit_fix: design::commit("mini-fix", i),
            config: "CONFIG_KASAN=y\nCONFIG_KCOV=y\n".to_string(),
            reproducer: Reproducer::from_bytes(
                ReproducerKind::MockScript,
                format!("mini-{i:02}\n").as_bytes(),
            ),
            gold_fix: gold_fix(i),
            metadata: RawMetadata {
                subsystem: "mini".to_string(),
                year: 2023,
                kernel_version: format!("6.1.{i}"),
            },
            bisect: None,
            email_refs: Vec::new(),
        })
        .collect()
}

/// Recorded model output for one curated bug: a gold patch inside
/// `<patch>` fences for the first `SOLVED` bugs, analysis prose for the
/// rest.
pub fn provider_output(i: usize) -> String {
    if i < SOLVED {
        format!(
            "The report points at mini{i:02}_poll touching the device after release.\n\
             Dropping the stale access and guarding the wait path fixes it.\n\
             \n<patch>\n{}</patch>\n",
            gold_fix(i)
        )
    } else {
        format!(
            "The crash in mini{i:02}_poll looks like a use-after-free on the wait path.\n\
             The poll handler should take a reference before sleeping, and the open\n\
             path likely needs the same guard. More of the driver is needed to say\n\
             which call site drops the reference early.\n"
        )
    }
}

/// Applying the gold fix to the buggy tree must yield the fixed tree,
/// or resolution trials could never reproduce the recorded verdicts.
pub fn self_check() {
    for i in 0..RAW_COUNT {
        let gold = gold_fix(i);
        let files = patch::parse(&gold).unwrap_or_else(|e| panic!("mini gold {i}: {e}"));
        let mut tree: BTreeMap<String, String> = [(file_path(i), buggy(i))].into();
        patch::apply(&mut tree, &files).unwrap_or_else(|e| panic!("mini gold {i} apply: {e}"));
        assert_eq!(tree[&file_path(i)], fixed(i), "mini gold {i} lands off target");
    }
}
