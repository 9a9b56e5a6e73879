//! Materializes the benchmark corpus from the design tables: one
//! `BenchSample` per entry plus the recorded file sizes and rankings
//! that stand in for the kernel checkouts of the original experiments.

use std::collections::BTreeMap;

use crashgym_core::crash::CrashReport;
use crashgym_core::fixtures::{FileSizes, Rankings};
use crashgym_core::model::{BenchSample, Reproducer, ReproducerKind};
use crashgym_core::patch::{self, DiffFile, DiffLine, Hunk, LineOp};

use crate::design;

pub struct BenchCorpus {
    pub samples: Vec<BenchSample>,
    pub sizes: FileSizes,
    pub rankings: Rankings,
}

pub fn generate() -> BenchCorpus {
    let samples: Vec<BenchSample> = (0..design::TOTAL).map(sample).collect();
    let mut sizes: FileSizes = BTreeMap::new();
    let mut rankings: Rankings = BTreeMap::new();
    for idx in 0..design::TOTAL {
        let id = design::bug_id(idx).as_str().to_string();
        sizes.insert(id.clone(), file_sizes(idx));
        rankings.insert(id, design::ranking(idx));
    }
    BenchCorpus { samples, sizes, rankings }
}

fn sample(idx: usize) -> BenchSample {
    let (kernel_version, fix_year) = design::version_year(idx);
    let sample = BenchSample {
        bug_id: design::bug_id(idx),
        commit_bug: design::commit("bug", idx),
        config: config_text(idx),
        reproducer: reproducer(idx),
        commit_fix: design::commit("fix", idx),
        commit_parent: design::commit("parent", idx),
        crash_parent: crash_report(idx),
        gold_fix: gold_fix(idx),
        bisect: if idx % 3 == 0 { Some(design::commit("cause", idx)) } else { None },
        email_refs: if idx % 5 == 0 {
            vec![format!("20230{}{:02}.{:07}@kbs.example.org", 1 + idx % 9, 1 + idx % 28, idx)]
        } else {
            Vec::new()
        },
        subsystem: design::subsystem(idx).to_string(),
        kernel_version,
        fix_year,
    };
    sample.validate().unwrap_or_else(|e| panic!("generated sample {idx} invalid: {e}"));
    sample
}

fn config_text(idx: usize) -> String {
    format!(
        "CONFIG_KASAN=y\nCONFIG_KASAN_INLINE=y\nCONFIG_KCOV=y\nCONFIG_DEBUG_INFO=y\n\
         CONFIG_FAULT_INJECTION=y\nCONFIG_KBS_SELFTEST_{idx:04}=y\n"
    )
}

fn reproducer(idx: usize) -> Reproducer {
    let text = format!(
        "r0 = openat$kbs(0xffffffffffffff9c, &(0x7f0000000000)='/dev/kbs{idx:04}\\x00', 0x2, 0x0)\n\
         ioctl$KBS_TRIGGER(r0, 0xc0104b00, &(0x7f0000000040)={{0x{idx:x}, 0x0}})\n\
         close(r0)\n"
    );
    Reproducer::from_bytes(ReproducerKind::Syz, text.as_bytes())
}

// ---------------------------------------------------------------------------
// Gold fixes

/// Body line counts for one hunk: half deletions, half additions,
/// deletions first, wrapped in three context lines on each side.
fn hunk(idx: usize, ordinal: usize, role: usize, changed: usize, old_start: usize) -> Hunk {
    let adds = changed.div_ceil(2);
    let dels = changed - adds;
    let mut lines = Vec::new();
    lines.push(DiffLine::new(LineOp::Context, "\tif (!dev)"));
    lines.push(DiffLine::new(LineOp::Context, "\t\treturn -EINVAL;"));
    lines.push(DiffLine::new(LineOp::Context, "\tmutex_lock(&dev->lock);"));
    for j in 0..dels {
        lines.push(DiffLine::new(LineOp::Del, format!("\tkbs_legacy_step_{ordinal}_{j}(dev);")));
    }
    for j in 0..adds {
        lines.push(DiffLine::new(
            LineOp::Add,
            format!("\tkbs_guarded_step_{ordinal}_{j}(dev, {idx});"),
        ));
    }
    lines.push(DiffLine::new(LineOp::Context, "\tmutex_unlock(&dev->lock);"));
    lines.push(DiffLine::new(LineOp::Context, "\treturn 0;"));
    lines.push(DiffLine::new(LineOp::Context, "}"));
    Hunk {
        old_start,
        old_len: 6 + dels,
        new_start: old_start,
        new_len: 6 + adds,
        context_header: design::context_header(idx, role),
        lines,
    }
}

pub fn gold_diff_files(idx: usize) -> Vec<DiffFile> {
    let tuples = design::gold_tuples(idx);
    let lines = design::hunk_lines(idx);
    let mut by_file: BTreeMap<usize, Vec<Hunk>> = BTreeMap::new();
    for (ordinal, (&(file, role), &n)) in tuples.iter().zip(&lines).enumerate() {
        let hunks = by_file.entry(file).or_default();
        let old_start = 40 * (hunks.len() + 1);
        hunks.push(hunk(idx, ordinal, role, n, old_start));
    }
    by_file
        .into_iter()
        .map(|(file, hunks)| DiffFile {
            old_path: Some(design::gold_path(idx, file)),
            new_path: Some(design::gold_path(idx, file)),
            hunks,
        })
        .collect()
}

fn gold_fix(idx: usize) -> String {
    patch::render(&gold_diff_files(idx))
}

// ---------------------------------------------------------------------------
// Crash consoles

fn ts(line: usize) -> String {
    format!("[{:5}.{:06}]", 3 + line / 9, (line * 7919) % 1_000_000)
}

/// Frame functions for the call trace: the designed number of gold-fix
/// functions, then bug-local and generic kernel frames.
fn frame_specs(idx: usize) -> Vec<(String, String)> {
    let tuples = design::gold_tuples(idx);
    let hits = design::crash_hits(idx);
    let mut frames: Vec<(String, String)> = tuples[..hits]
        .iter()
        .map(|&(file, role)| {
            (design::fn_name(idx, role), format!("{}:{}", design::gold_path(idx, file), 40 + role))
        })
        .collect();
    if hits == 0 {
        frames.push((format!("kbs{idx:04}_timer"), format!("drivers/kbs/kbs{idx:04}_tim.c:77")));
    }
    frames.push(("kasan_report".into(), "mm/kasan/report.c:601".into()));
    frames.push(("__x64_sys_ioctl".into(), "fs/ioctl.c:890".into()));
    frames.push(("do_syscall_64".into(), "arch/x86/entry/common.c:50".into()));
    frames.push(("entry_SYSCALL_64_after_hwframe".into(), "arch/x86/entry/entry_64.S:120".into()));
    frames
}

pub fn console_text(idx: usize) -> String {
    let total = design::crash_lines(idx);
    let frames = frame_specs(idx);
    let title_fn = frames[0].0.clone();
    let mut lines: Vec<String> = Vec::with_capacity(total);
    lines.push(format!(
        "{} Linux version {}-syzkaller (kbs@builder) (gcc 12.2.0)",
        ts(0),
        design::version_year(idx).0
    ));
    lines.push(format!("{} kbs: registered device kbs{idx:04}", ts(1)));
    lines.push(format!(
        "{} BUG: KASAN: use-after-free Read in {title_fn}",
        ts(2)
    ));
    lines.push(format!(
        "{} Read of size 8 at addr ffff8880{:08x} by task syz-executor/{}",
        ts(3),
        0x1000 + idx * 64,
        4000 + idx
    ));
    lines.push(format!("{} Call Trace:", ts(4)));
    for (i, (name, location)) in frames.iter().enumerate() {
        lines.push(format!(
            "{}  {name}+0x{:x}/0x{:x} {location}",
            ts(5 + i),
            0x20 + i * 7,
            0x200 + i * 16
        ));
    }
    let used = lines.len();
    assert!(used + 1 < total, "crash budget for {idx} too small: {used} fixed lines");
    for i in used..total - 1 {
        lines.push(format!("{} kbs-load: cycle {:04} of {:04}", ts(i), i, total));
    }
    lines.push(format!("{} ---[ end trace {:016x} ]---", ts(total - 1), idx * 0x9e3779b9));
    let mut out = lines.join("\n");
    out.push('\n');
    out
}

fn crash_report(idx: usize) -> CrashReport {
    let report = CrashReport::from_console(&console_text(idx))
        .unwrap_or_else(|e| panic!("generated console {idx} unparseable: {e}"));
    assert_eq!(report.line_count, design::crash_lines(idx), "console {idx} line budget");
    report
}

// ---------------------------------------------------------------------------
// Recorded checkout shape

/// Sizes for every file the recorded experiments touched for this bug:
/// the gold files and the top-ranked non-gold candidates.
fn file_sizes(idx: usize) -> BTreeMap<String, usize> {
    let mut sizes = BTreeMap::new();
    for file in 0..design::gold_file_count(idx) {
        sizes.insert(design::gold_path(idx, file), design::oracle_file_size(idx));
    }
    for path in design::ranking(idx).into_iter().take(3) {
        sizes.entry(path).or_insert_with(|| design::filler_size(idx));
    }
    sizes
}
