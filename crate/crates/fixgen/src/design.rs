//! Static design tables for the shipped fixture corpus.
//!
//! Every number the generated corpus must reproduce — entry counts per
//! prompt-budget band, gold-fix shapes, crash shapes, retrieval ranks,
//! and the recorded role of each bug inside each campaign log — lives
//! here as data. `bench`, `outcomes`, and `verify` all derive from these
//! tables, so regeneration is byte-identical and the self-checks cannot
//! drift from the corpus they check.

use std::collections::BTreeMap;

use crashgym_core::model::{BugId, CommitId, FixClass};
use crashgym_core::retrieval::RetrievalMode;
use sha2::{Digest, Sha256};

pub const TOTAL: usize = 279;

/// First index whose whole-context prompt exceeds the 16K budget.
pub const MID_START: usize = 117;
/// First index whose whole-context prompt exceeds the 50K budget too.
pub const BIG_START: usize = 228;
/// First index where even a single ranked file exceeds 50K.
pub const HUGE_START: usize = 275;

// Source-file sizes in bytes per band; prompt tokens estimate to len/4
// rounded up, so these translate to ~1.5K, ~20K, and ~62.5K tokens.
pub const SMALL_FILE: usize = 6_000;
pub const MID_FILE: usize = 80_000;
pub const HUGE_FILE: usize = 250_000;

/// Function-name suffixes inside generated drivers; index 201 needs 20
/// distinct changed functions, the widest fix in the corpus.
pub const ROLES: [&str; 20] = [
    "probe", "open", "ioctl", "poll", "write", "read", "bind", "recv", "send", "close", "init",
    "fini", "attach", "detach", "reset", "resume", "suspend", "notify", "queue", "flush",
];

pub fn bug_id(idx: usize) -> BugId {
    BugId(format!("kbs-{idx:04}"))
}

fn hex40(tag: &str, idx: usize) -> String {
    let mut h = Sha256::new();
    h.update(tag.as_bytes());
    h.update(idx.to_le_bytes());
    let digest = h.finalize();
    let mut s = String::with_capacity(40);
    for byte in digest.iter().take(20) {
        s.push_str(&format!("{byte:02x}"));
    }
    s
}

pub fn commit(tag: &str, idx: usize) -> CommitId {
    CommitId(hex40(tag, idx))
}

pub fn fn_name(idx: usize, role: usize) -> String {
    format!("kbs{idx:04}_{}", ROLES[role])
}

pub fn context_header(idx: usize, role: usize) -> String {
    format!("static int {}(struct kbs_dev *dev)", fn_name(idx, role))
}

// ---------------------------------------------------------------------------
// Fix shape

pub fn fix_class(idx: usize) -> FixClass {
    match idx {
        0..=13 | 117..=128 | 228..=232 | 275 | 276 => FixClass::SingleLine,
        14..=71 | 129..=184 | 233..=261 | 277 | 278 => FixClass::SingleFunctionMultiLine,
        72..=101 | 185..=206 | 262..=266 => FixClass::MultiFunctionSingleFile,
        102..=116 | 207..=227 | 267..=274 => FixClass::MultiFile,
        _ => unreachable!("index {idx} out of corpus range"),
    }
}

pub fn gold_file_count(idx: usize) -> usize {
    match fix_class(idx) {
        FixClass::MultiFile => match idx {
            113 | 223..=227 | 267..=269 => 3,
            270..=274 => 7,
            _ => 2,
        },
        _ => 1,
    }
}

/// Number of distinct (function, file) locations the gold fix touches.
pub fn gold_tuple_count(idx: usize) -> usize {
    match fix_class(idx) {
        FixClass::MultiFunctionSingleFile => match idx {
            72..=76 | 185..=196 => 4,
            77..=79 | 197..=200 => 12,
            80 => 10,
            81 => 16,
            201 => 20,
            _ => 2,
        },
        FixClass::MultiFile => gold_file_count(idx),
        _ => 1,
    }
}

/// (file ordinal, role ordinal) per gold location, in hunk order.
pub fn gold_tuples(idx: usize) -> Vec<(usize, usize)> {
    match fix_class(idx) {
        FixClass::MultiFile => (0..gold_file_count(idx)).map(|f| (f, f)).collect(),
        _ => (0..gold_tuple_count(idx)).map(|r| (0, r)).collect(),
    }
}

pub fn changed_lines(idx: usize) -> usize {
    if fix_class(idx) == FixClass::SingleLine {
        return 1;
    }
    if idx == 201 {
        return 147;
    }
    // Remaining bugs take 16 then 15 changed lines in index order; the
    // split point keeps the corpus-wide average at the published value.
    let pos = (0..idx).filter(|&i| fix_class(i) != FixClass::SingleLine && i != 201).count();
    if pos < 126 {
        16
    } else {
        15
    }
}

/// Changed-line count per gold location (one hunk each), summing to
/// `changed_lines`.
pub fn hunk_lines(idx: usize) -> Vec<usize> {
    let total = changed_lines(idx);
    let g = gold_tuple_count(idx);
    let base = total / g;
    let rem = total % g;
    (0..g).map(|i| if i < rem { base + 1 } else { base }).collect()
}

pub fn subsystem(idx: usize) -> &'static str {
    SUBSYSTEMS[(idx * 7) % TOTAL]
}

/// (kernel version, fix year) pairs, permuted across indices so series
/// and class bands do not line up.
pub fn version_year(idx: usize) -> (String, i32) {
    let slot = (idx * 11 + 5) % TOTAL;
    let (series, minor_base, year) = series_year(slot);
    let minor = slot % 19;
    let patch = 1 + (slot * 3) % 200;
    (format!("{series}.{}.{patch}", minor_base + minor % 6), year)
    // minor_base keeps 4.x in 4.14..4.19 and leaves 5.x/6.x realistic.
}

fn series_year(slot: usize) -> (u32, usize, i32) {
    // 26 entries on 4.x, 141 on 5.x, 112 on 6.x.
    match slot {
        0..=19 => (4, 14, 2018),
        20..=25 => (4, 14, 2019),
        26..=39 => (5, 0, 2019),
        40..=83 => (5, 4, 2020),
        84..=117 => (5, 8, 2021),
        118..=166 => (5, 13, 2022),
        167..=199 => (6, 0, 2022),
        200..=278 => (6, 1, 2023),
        _ => unreachable!("slot {slot} out of range"),
    }
}

// ---------------------------------------------------------------------------
// Crash shape

pub fn crash_lines(idx: usize) -> usize {
    match idx {
        0 => 624,
        1..=100 => 83,
        _ => 82,
    }
}

/// How many gold-fix functions appear in the crash call trace.
pub fn crash_hits(idx: usize) -> usize {
    match idx {
        0..=66 | 228..=235 => gold_tuple_count(idx),
        72..=110 | 262..=267 => 1,
        _ => 0,
    }
}

// ---------------------------------------------------------------------------
// Retrieval shape

/// 1-based rank of each gold file in the recorded rankings (parallel to
/// file order); empty when retrieval missed the fix entirely.
pub fn oracle_ranks(idx: usize) -> Vec<usize> {
    match idx {
        14 | 16 => vec![2],
        15 | 17 => vec![3],
        18 | 20 | 22 => vec![4],
        19 | 21 => vec![5],
        23 => vec![6],
        24 => vec![7],
        25 => vec![8],
        26 => vec![9],
        27 => vec![10],
        28..=34 => vec![11 + (idx - 28)],
        114 => vec![4, 8],
        115 => vec![15, 25],
        233 | 235 => vec![2],
        234 | 236 => vec![3],
        237 => vec![4],
        238 => vec![7],
        239 => vec![13],
        _ => Vec::new(),
    }
}

pub fn oracle_file_size(idx: usize) -> usize {
    let k = gold_file_count(idx);
    match idx {
        0..=116 => SMALL_FILE,
        117..=227 => MID_FILE.div_ceil(k),
        _ => HUGE_FILE.div_ceil(k),
    }
}

/// Size of the non-gold files surrounding a bug in its rankings.
pub fn filler_size(idx: usize) -> usize {
    match idx {
        0..=226 => SMALL_FILE,
        227..=274 => MID_FILE,
        _ => HUGE_FILE,
    }
}

pub fn gold_path(idx: usize, file: usize) -> String {
    let sub = subsystem(idx);
    if gold_file_count(idx) == 1 {
        format!("drivers/{sub}/kbs{idx:04}.c")
    } else {
        format!("drivers/{sub}/kbs{idx:04}_{file}.c")
    }
}

pub fn filler_path(idx: usize, rank: usize) -> String {
    format!("fill/kbs{idx:04}/r{rank}.c")
}

/// Ranked candidate paths for one bug, gold files pinned at their
/// designed ranks and fillers everywhere else.
pub fn ranking(idx: usize) -> Vec<String> {
    let ranks = oracle_ranks(idx);
    let len = ranks.iter().copied().max().unwrap_or(0).max(3);
    let by_rank: BTreeMap<usize, usize> =
        ranks.iter().enumerate().map(|(file, &rank)| (rank, file)).collect();
    (1..=len)
        .map(|rank| match by_rank.get(&rank) {
            Some(&file) => gold_path(idx, file),
            None => filler_path(idx, rank),
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Campaign logs

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    /// Gold fix at candidate 0 — counted by the top-1 columns.
    SolvedC0,
    /// Gold fix at candidate 5 — only the top-10 columns see it.
    SolvedC5,
    /// Unresolved patch covering every gold location (recorded hunk
    /// mismatch): complete localization without a fix.
    Extra,
    /// Unresolved patch covering `hits` of the gold locations.
    Partial { hits: usize },
    /// Patch applies and rebuilds but the crash persists; candidate 0.
    ApplyC0,
    /// Same, at candidate 5.
    ApplyC5,
    /// No parseable patch in any candidate.
    Rest,
}

#[derive(Debug, Clone)]
pub struct LogPlan {
    pub model: &'static str,
    pub setting: RetrievalMode,
    /// Candidates recorded per bug.
    pub n: usize,
    /// Eligible bugs are exactly indices `0..eligible`.
    pub eligible: usize,
    pub roles: BTreeMap<usize, Role>,
}

pub fn eligible_count(setting: RetrievalMode, budget: usize) -> usize {
    match (setting, budget) {
        (RetrievalMode::Oracle, 16_000) => MID_START,
        (RetrievalMode::Oracle, 50_000) => BIG_START,
        (RetrievalMode::Bm25, 16_000) => 227,
        (RetrievalMode::Bm25, 50_000) => HUGE_START,
        _ => unreachable!("unplanned budget {budget}"),
    }
}

struct LogSpec {
    model: &'static str,
    setting: RetrievalMode,
    n: usize,
    solved_c0: Vec<usize>,
    solved_c5: Vec<usize>,
    extras: Vec<usize>,
    partials: Vec<(usize, usize)>,
    /// Explicit apply-only set, or a count drawn from unassigned indices.
    apply: ApplySpec,
    apply_c0: usize,
}

enum ApplySpec {
    FirstFree(usize),
    Explicit(Vec<usize>),
}

fn ids(ranges: &[(usize, usize)]) -> Vec<usize> {
    ranges.iter().flat_map(|&(a, b)| a..=b).collect()
}

fn claim(roles: &mut BTreeMap<usize, Role>, model: &str, eligible: usize, idx: usize, role: Role) {
    assert!(idx < eligible, "{model}: index {idx} outside eligible range");
    assert!(roles.insert(idx, role).is_none(), "{model}: index {idx} assigned twice");
}

fn build(spec: LogSpec) -> LogPlan {
    let budget = if spec.model == "gpt-3.5-turbo" { 16_000 } else { 50_000 };
    let eligible = eligible_count(spec.setting, budget);
    let mut roles: BTreeMap<usize, Role> = BTreeMap::new();
    for &idx in &spec.solved_c0 {
        claim(&mut roles, spec.model, eligible, idx, Role::SolvedC0);
    }
    for &idx in &spec.solved_c5 {
        assert!(spec.n > 5, "{}: candidate 5 needs n > 5", spec.model);
        claim(&mut roles, spec.model, eligible, idx, Role::SolvedC5);
    }
    for &idx in &spec.extras {
        claim(&mut roles, spec.model, eligible, idx, Role::Extra);
    }
    for &(idx, hits) in &spec.partials {
        let g = gold_tuple_count(idx);
        assert!(hits >= 1 && hits < g, "{}: partial {idx} needs 1..{g} hits", spec.model);
        claim(&mut roles, spec.model, eligible, idx, Role::Partial { hits });
    }
    let apply: Vec<usize> = match spec.apply {
        ApplySpec::Explicit(list) => list,
        ApplySpec::FirstFree(count) => {
            (0..eligible).filter(|i| !roles.contains_key(i)).take(count).collect()
        }
    };
    let (head, tail) = apply.split_at(spec.apply_c0.min(apply.len()));
    assert!(spec.n > 5 || tail.is_empty(), "{}: candidate 5 needs n > 5", spec.model);
    for &idx in head {
        claim(&mut roles, spec.model, eligible, idx, Role::ApplyC0);
    }
    for &idx in tail {
        claim(&mut roles, spec.model, eligible, idx, Role::ApplyC5);
    }
    for idx in 0..eligible {
        roles.entry(idx).or_insert(Role::Rest);
    }
    LogPlan { model: spec.model, setting: spec.setting, n: spec.n, eligible, roles }
}

/// The eight recorded campaigns, in manifest order.
pub fn log_plans() -> Vec<LogPlan> {
    use RetrievalMode::{Bm25, Oracle};
    let mut plans = Vec::new();

    plans.push(build(LogSpec {
        model: "gpt-4-turbo",
        setting: Oracle,
        n: 10,
        solved_c0: vec![1, 2, 3],
        solved_c5: ids(&[(35, 46)]),
        extras: ids(&[(61, 67)]),
        partials: ids(&[(72, 76), (185, 195)])
            .into_iter()
            .map(|i| (i, 1))
            .chain([(196, 3), (81, 15)])
            .collect(),
        apply: ApplySpec::FirstFree(144),
        apply_c0: 53,
    }));

    plans.push(build(LogSpec {
        model: "gpt-3.5-turbo",
        setting: Oracle,
        n: 10,
        solved_c0: vec![],
        solved_c5: vec![1, 57, 58],
        extras: ids(&[(4, 8), (14, 27), (35, 46), (61, 67), (83, 89), (114, 116)]),
        partials: ids(&[(102, 112)]).into_iter().map(|i| (i, 1)).chain([(72, 1)]).collect(),
        apply: ApplySpec::Explicit(ids(&[
            (0, 0),
            (9, 13),
            (28, 34),
            (47, 56),
            (59, 60),
            (68, 71),
            (73, 76),
            (77, 82),
            (90, 90),
        ])),
        apply_c0: 4,
    }));

    plans.push(build(LogSpec {
        model: "claude-3-sonnet",
        setting: Oracle,
        n: 1,
        solved_c0: ids(&[(52, 56)]),
        solved_c5: vec![],
        extras: ids(&[(4, 7), (14, 27), (35, 46), (47, 51), (57, 58), (61, 67), (83, 84), (114, 114)]),
        partials: ids(&[(102, 112), (207, 215)])
            .into_iter()
            .map(|i| (i, 1))
            .chain(ids(&[(77, 79), (197, 200)]).into_iter().map(|i| (i, 1)))
            .chain([(80, 1)])
            .collect(),
        apply: ApplySpec::FirstFree(72),
        apply_c0: 72,
    }));

    plans.push(build(LogSpec {
        model: "gemini-1.5-pro",
        setting: Oracle,
        n: 10,
        solved_c0: vec![47, 48],
        solved_c5: vec![1, 2, 3, 35, 36, 49, 50, 51],
        extras: ids(&[(4, 7), (14, 34), (37, 46), (57, 62), (85, 86), (115, 115)]),
        partials: ids(&[(102, 112), (207, 209)])
            .into_iter()
            .map(|i| (i, 1))
            .chain(ids(&[(77, 79), (197, 199)]).into_iter().map(|i| (i, 1)))
            .chain([(113, 1), (201, 3)])
            .collect(),
        apply: ApplySpec::FirstFree(117),
        apply_c0: 60,
    }));

    plans.push(build(LogSpec {
        model: "gpt-4-turbo",
        setting: Bm25,
        n: 10,
        solved_c0: vec![],
        solved_c5: vec![35, 59],
        extras: vec![61],
        partials: vec![(72, 1), (113, 1)],
        apply: ApplySpec::FirstFree(152),
        apply_c0: 44,
    }));

    plans.push(build(LogSpec {
        model: "gpt-3.5-turbo",
        setting: Bm25,
        n: 10,
        solved_c0: vec![60],
        solved_c5: vec![],
        extras: vec![62],
        partials: vec![(102, 1), (103, 1), (73, 1), (113, 1)],
        apply: ApplySpec::FirstFree(113),
        apply_c0: 36,
    }));

    plans.push(build(LogSpec {
        model: "claude-3-sonnet",
        setting: Bm25,
        n: 1,
        solved_c0: vec![],
        solved_c5: vec![],
        extras: ids(&[(61, 66)]),
        partials: vec![(102, 1), (103, 1), (104, 1), (113, 1)],
        apply: ApplySpec::FirstFree(80),
        apply_c0: 80,
    }));

    plans.push(build(LogSpec {
        model: "gemini-1.5-pro",
        setting: Bm25,
        n: 10,
        solved_c0: vec![],
        solved_c5: vec![],
        extras: ids(&[(61, 66)]),
        partials: vec![(102, 1), (103, 1), (104, 1)],
        apply: ApplySpec::FirstFree(68),
        apply_c0: 34,
    }));

    plans
}

// ---------------------------------------------------------------------------
// Subsystems

/// 72 subsystems: three heavy hitters, then 42 at three bugs and 27 at
/// two, covering all 279 entries.
pub const SUBSYSTEMS: [&str; TOTAL] = build_subsystems();

const HEAVY: [(&str, usize); 3] = [("net", 40), ("usb", 31), ("fs", 28)];

const TRIPLE: [&str; 42] = [
    "mm", "bpf", "kvm", "block", "ext4", "btrfs", "xfs", "f2fs", "nfs", "jfs", "io_uring",
    "sound", "input", "hid", "media", "gpu", "wireless", "bluetooth", "can", "sctp", "tipc",
    "netfilter", "ipv6", "tcp", "udp", "tty", "serial", "scsi", "ata", "nvme", "md", "dm", "mmc",
    "mtd", "rdma", "crypto", "selinux", "apparmor", "tracing", "perf", "sched", "ntfs3",
];

const DOUBLE: [&str; 27] = [
    "ocfs2", "squashfs", "overlayfs", "fuse", "cifs", "gfs2", "udf", "hfsplus", "reiserfs",
    "exfat", "vsock", "rds", "dccp", "packet", "ppp", "batman", "wwan", "thermal", "acpi", "pm",
    "edac", "i2c", "spi", "gpio", "iommu", "vfio", "uio",
];

const fn build_subsystems() -> [&'static str; TOTAL] {
    let mut out = [""; TOTAL];
    let mut pos = 0;
    let mut h = 0;
    while h < HEAVY.len() {
        let (name, count) = HEAVY[h];
        let mut i = 0;
        while i < count {
            out[pos] = name;
            pos += 1;
            i += 1;
        }
        h += 1;
    }
    let mut t = 0;
    while t < TRIPLE.len() {
        let mut i = 0;
        while i < 3 {
            out[pos] = TRIPLE[t];
            pos += 1;
            i += 1;
        }
        t += 1;
    }
    let mut d = 0;
    while d < DOUBLE.len() {
        let mut i = 0;
        while i < 2 {
            out[pos] = DOUBLE[d];
            pos += 1;
            i += 1;
        }
        d += 1;
    }
    assert!(pos == TOTAL);
    out
}
