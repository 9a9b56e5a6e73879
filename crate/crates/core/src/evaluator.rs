//! Metric computation over outcome logs and diffs: apply/solve rates,
//! cross-model union solves, and localization-overlap analyses.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::model::{BenchSample, BugId, FixClass, OverlapClass, classify_fix};
use crate::outcome::TrialOutcome;
use crate::patch::{self, PatchParseError};
use crate::pct::{Ratio, format_pct};

/// A localization target: one function in one file.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LocTuple {
    pub function_name: String,
    pub file_name: String,
}

/// All (enclosing function, file) pairs a diff touches. Hunks without a
/// context heading contribute a file-level tuple with an empty function
/// name.
pub fn extract_loc_tuples(diff: &str) -> Result<BTreeSet<LocTuple>, PatchParseError> {
    let files = patch::parse(diff)?;
    let mut tuples = BTreeSet::new();
    for file in &files {
        for hunk in &file.hunks {
            tuples.insert(LocTuple {
                function_name: patch::context_function_name(&hunk.context_header)
                    .unwrap_or_default(),
                file_name: file.target_path().to_string(),
            });
        }
    }
    Ok(tuples)
}

/// How a candidate's localization targets cover the gold ones.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapVerdict {
    pub class: OverlapClass,
    /// |candidate ∩ gold| / |gold| in [0, 1].
    pub recall: f64,
}

fn recall_ratio(candidate: &BTreeSet<LocTuple>, gold: &BTreeSet<LocTuple>) -> Ratio {
    if gold.is_empty() {
        return Ratio::ZERO;
    }
    let hits = gold.iter().filter(|t| candidate.contains(t)).count() as u64;
    Ratio::new(hits, gold.len() as u64)
}

pub fn overlap_verdict(
    candidate: &BTreeSet<LocTuple>,
    gold: &BTreeSet<LocTuple>,
) -> OverlapVerdict {
    let recall = recall_ratio(candidate, gold);
    let class = if gold.is_empty() || recall == Ratio::ZERO {
        OverlapClass::Disjoint
    } else if recall == Ratio::new(1, 1) {
        OverlapClass::Complete
    } else {
        OverlapClass::Partial
    };
    OverlapVerdict { class, recall: recall.num() as f64 / recall.den() as f64 }
}

/// Campaign-level application and solve rates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApplySolveRates {
    pub dataset_size: usize,
    pub n: usize,
    pub applied_bugs: usize,
    pub solved_bugs: usize,
    pub apply_pct: String,
    pub solve_pct: String,
}

/// A bug counts as applied (solved) when any of its first `n` candidates
/// applied (resolved); percentages are over the full dataset size, not
/// the prompt-eligible subset. Infrastructure-voided outcomes are
/// excluded.
pub fn apply_solve_rates(log: &[TrialOutcome], dataset_size: usize, n: usize) -> ApplySolveRates {
    let mut applied: BTreeSet<&BugId> = BTreeSet::new();
    let mut solved: BTreeSet<&BugId> = BTreeSet::new();
    for outcome in log {
        if outcome.infrastructure || outcome.candidate_index >= n {
            continue;
        }
        if outcome.applied {
            applied.insert(&outcome.bug_id);
        }
        if outcome.resolved {
            solved.insert(&outcome.bug_id);
        }
    }
    ApplySolveRates {
        dataset_size,
        n,
        applied_bugs: applied.len(),
        solved_bugs: solved.len(),
        apply_pct: format_pct(applied.len(), dataset_size),
        solve_pct: format_pct(solved.len(), dataset_size),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnionSolve {
    pub unique_solved: usize,
    pub total_solve_outcomes: usize,
    pub union_pct: String,
}

/// Distinct bugs solved by any model; percentage over the dataset size.
/// `total_solve_outcomes` counts per-log solved bugs with multiplicity.
pub fn union_solve(logs: &[&[TrialOutcome]], dataset_size: usize) -> UnionSolve {
    let mut union: BTreeSet<&BugId> = BTreeSet::new();
    let mut total = 0usize;
    for log in logs {
        let mut per_log: BTreeSet<&BugId> = BTreeSet::new();
        for outcome in *log {
            if !outcome.infrastructure && outcome.resolved {
                per_log.insert(&outcome.bug_id);
            }
        }
        total += per_log.len();
        union.extend(per_log);
    }
    UnionSolve {
        unique_solved: union.len(),
        total_solve_outcomes: total,
        union_pct: format_pct(union.len(), dataset_size),
    }
}

/// Localization efficacy of one campaign log against gold fixes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalizationReport {
    /// Bugs with at least one candidate evaluated.
    pub evaluated: usize,
    pub complete_total: usize,
    pub complete_by_class: BTreeMap<FixClass, usize>,
    pub partial_count: usize,
    /// Mean recall among partial-overlap bugs, as a percent string.
    pub partial_mean_recall_pct: String,
    pub none_count: usize,
}

/// Judge each bug by its best candidate: Complete beats Partial beats
/// None, and a partial bug's recall is its best candidate's recall.
/// Candidates whose recorded patch does not parse contribute nothing.
pub fn localization_report(
    log: &[TrialOutcome],
    dataset: &[BenchSample],
) -> Result<LocalizationReport, PatchParseError> {
    let by_id: BTreeMap<&BugId, &BenchSample> =
        dataset.iter().map(|s| (&s.bug_id, s)).collect();
    let mut candidates: BTreeMap<&BugId, Vec<&str>> = BTreeMap::new();
    for outcome in log {
        if outcome.infrastructure || !by_id.contains_key(&outcome.bug_id) {
            continue;
        }
        let entry = candidates.entry(&outcome.bug_id).or_default();
        if let Some(text) = &outcome.patch_text {
            entry.push(text);
        }
    }

    let mut report = LocalizationReport {
        evaluated: candidates.len(),
        complete_total: 0,
        complete_by_class: BTreeMap::new(),
        partial_count: 0,
        partial_mean_recall_pct: String::new(),
        none_count: 0,
    };
    let mut partial_sum = Ratio::ZERO;
    for (bug_id, texts) in candidates {
        let sample = by_id[bug_id];
        let gold_files = sample.parsed_gold_fix().map_err(|_| PatchParseError::MalformedDiff {
            line_no: 1,
            reason: format!("gold fix of {bug_id} does not parse"),
        })?;
        let gold = {
            let mut set = BTreeSet::new();
            for file in &gold_files {
                for hunk in &file.hunks {
                    set.insert(LocTuple {
                        function_name: patch::context_function_name(&hunk.context_header)
                            .unwrap_or_default(),
                        file_name: file.target_path().to_string(),
                    });
                }
            }
            set
        };
        let mut best: Option<Ratio> = None;
        for text in texts {
            let Ok(tuples) = extract_loc_tuples(text) else { continue };
            let recall = recall_ratio(&tuples, &gold);
            if best.is_none_or(|b| recall > b) {
                best = Some(recall);
            }
        }
        match best {
            Some(r) if !gold.is_empty() && r == Ratio::new(1, 1) => {
                report.complete_total += 1;
                *report.complete_by_class.entry(classify_fix(&gold_files)).or_default() += 1;
            }
            Some(r) if r > Ratio::ZERO => {
                report.partial_count += 1;
                partial_sum = partial_sum.add(r);
            }
            _ => report.none_count += 1,
        }
    }
    report.partial_mean_recall_pct = if report.partial_count == 0 {
        "0.00".to_string()
    } else {
        partial_sum.div(report.partial_count as u64).format_pct()
    };
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapCounts {
    pub complete: usize,
    pub partial: usize,
    pub none: usize,
}

impl OverlapCounts {
    pub fn total(&self) -> usize {
        self.complete + self.partial + self.none
    }
}

/// Compare the function names in each sample's captured crash against the
/// named functions its gold fix modifies, over one setting's eligible
/// subset.
pub fn crash_fix_overlap(
    samples: &[BenchSample],
    subset: &BTreeSet<BugId>,
) -> Result<OverlapCounts, PatchParseError> {
    let mut counts = OverlapCounts { complete: 0, partial: 0, none: 0 };
    for sample in samples {
        if !subset.contains(&sample.bug_id) {
            continue;
        }
        let gold_fns: BTreeSet<String> = extract_loc_tuples(&sample.gold_fix)?
            .into_iter()
            .map(|t| t.function_name)
            .filter(|f| !f.is_empty())
            .collect();
        let crash_fns = sample.crash_parent.function_names();
        let hits = gold_fns.iter().filter(|f| crash_fns.contains(*f)).count();
        if gold_fns.is_empty() || hits == 0 {
            counts.none += 1;
        } else if hits == gold_fns.len() {
            counts.complete += 1;
        } else {
            counts.partial += 1;
        }
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crash::CrashReport;
    use crate::model::{Reproducer, ReproducerKind};
    use crate::outcome::FailureStage;
    use crate::retrieval::RetrievalMode;

    fn diff(path: &str, function: &str) -> String {
        format!(
            "--- a/{path}\n+++ b/{path}\n@@ -1,2 +1,2 @@ static int {function}(void)\n x();\n-y();\n+z();\n"
        )
    }

    fn two_function_diff(path: &str, f1: &str, f2: &str) -> String {
        format!(
            concat!(
                "--- a/{p}\n+++ b/{p}\n",
                "@@ -1,2 +1,2 @@ static int {f1}(void)\n x();\n-y();\n+z();\n",
                "@@ -10,2 +10,2 @@ static int {f2}(void)\n a();\n-b();\n+c();\n",
            ),
            p = path,
            f1 = f1,
            f2 = f2
        )
    }

    use crate::model::CommitId;

    fn sample(bug: &str, gold_fix: String, console: &str) -> BenchSample {
        BenchSample {
            bug_id: BugId::from(bug),
            commit_bug: CommitId::from("a".repeat(40)),
            config: String::new(),
            reproducer: Reproducer::from_bytes(ReproducerKind::MockScript, b"r"),
            commit_fix: CommitId::from("b".repeat(40)),
            commit_parent: CommitId::from("c".repeat(40)),
            crash_parent: CrashReport::from_console(console).unwrap(),
            gold_fix,
            bisect: None,
            email_refs: vec![],
            subsystem: "fs".into(),
            kernel_version: "5.15.0".into(),
            fix_year: 2022,
        }
    }

    fn outcome(bug: &str, idx: usize, applied: bool, resolved: bool) -> TrialOutcome {
        TrialOutcome {
            bug_id: BugId::from(bug),
            setting: RetrievalMode::Oracle,
            candidate_index: idx,
            extracted: true,
            applied,
            resolved,
            failure_stage: if resolved {
                None
            } else if applied {
                Some(FailureStage::StillCrashes)
            } else {
                Some(FailureStage::HunkMismatch)
            },
            infrastructure: false,
            patch_text: Some(diff("fs/a.c", "alpha")),
            job_ids: vec![],
        }
    }

    #[test]
    fn loc_tuples_deduplicate_and_handle_empty_context() {
        let tuples = extract_loc_tuples(&two_function_diff("fs/a.c", "alpha", "alpha")).unwrap();
        assert_eq!(tuples.len(), 1);
        let no_ctx = "--- a/fs/a.c\n+++ b/fs/a.c\n@@ -1,2 +1,2 @@\n x();\n-y();\n+z();\n";
        let tuples = extract_loc_tuples(no_ctx).unwrap();
        assert_eq!(tuples.iter().next().unwrap().function_name, "");
    }

    #[test]
    fn rates_count_any_of_top_n_over_full_dataset() {
        let log = vec![
            outcome("bug-1", 0, true, true),
            outcome("bug-1", 1, true, false),
            outcome("bug-2", 0, false, false),
            outcome("bug-2", 1, true, false),
            outcome("bug-3", 0, false, false),
        ];
        let top1 = apply_solve_rates(&log, 10, 1);
        assert_eq!((top1.applied_bugs, top1.solved_bugs), (1, 1));
        assert_eq!(top1.apply_pct, "10.00");
        let top10 = apply_solve_rates(&log, 10, 10);
        assert_eq!((top10.applied_bugs, top10.solved_bugs), (2, 1));
        // monotone: widening n never loses bugs
        assert!(top10.applied_bugs >= top1.applied_bugs);
    }

    #[test]
    fn infrastructure_outcomes_are_excluded() {
        let mut infra = outcome("bug-9", 0, true, false);
        infra.infrastructure = true;
        let rates = apply_solve_rates(&[infra], 10, 10);
        assert_eq!(rates.applied_bugs, 0);
    }

    #[test]
    fn union_is_distinct_across_logs() {
        let a = vec![outcome("bug-1", 0, true, true), outcome("bug-2", 0, true, true)];
        let b = vec![outcome("bug-2", 0, true, true), outcome("bug-3", 0, true, true)];
        let u = union_solve(&[&a, &b], 20);
        assert_eq!(u.unique_solved, 3);
        assert_eq!(u.total_solve_outcomes, 4);
        assert_eq!(u.union_pct, "15.00");
    }

    #[test]
    fn localization_takes_the_best_candidate() {
        let dataset = vec![sample(
            "bug-1",
            two_function_diff("fs/a.c", "alpha", "beta"),
            "BUG: crash\n",
        )];
        // candidate 0 hits one of two functions; candidate 1 hits both
        let mut c0 = outcome("bug-1", 0, true, false);
        c0.patch_text = Some(diff("fs/a.c", "alpha"));
        let mut c1 = outcome("bug-1", 1, true, false);
        c1.patch_text = Some(two_function_diff("fs/a.c", "alpha", "beta"));
        let report = localization_report(&[c0.clone(), c1], &dataset).unwrap();
        assert_eq!(report.complete_total, 1);
        assert_eq!(report.complete_by_class[&FixClass::MultiFunctionSingleFile], 1);
        assert_eq!(report.partial_count, 0);

        let report = localization_report(&[c0], &dataset).unwrap();
        assert_eq!(report.complete_total, 0);
        assert_eq!(report.partial_count, 1);
        assert_eq!(report.partial_mean_recall_pct, "50.00");
    }

    #[test]
    fn crash_overlap_classes() {
        let complete = sample(
            "bug-c",
            diff("fs/a.c", "alpha"),
            "BUG: x\n alpha+0x1/0x2 fs/a.c:1\n",
        );
        let partial = sample(
            "bug-p",
            two_function_diff("fs/a.c", "alpha", "beta"),
            "BUG: x\n alpha+0x1/0x2 fs/a.c:1\n",
        );
        let none = sample("bug-n", diff("fs/a.c", "alpha"), "BUG: x\n other+0x1/0x2\n");
        let samples = vec![complete, partial, none];
        let subset: BTreeSet<BugId> =
            ["bug-c", "bug-p", "bug-n"].into_iter().map(BugId::from).collect();
        let counts = crash_fix_overlap(&samples, &subset).unwrap();
        assert_eq!((counts.complete, counts.partial, counts.none), (1, 1, 1));
        assert_eq!(counts.total(), 3);
    }
}
