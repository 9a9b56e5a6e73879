//! Self-checks over the written corpus: everything is reloaded from disk
//! and pushed through the real evaluator, prompt assembler, retrieval
//! scorer, curator, and resolver, asserting the exact aggregate numbers
//! the corpus is designed to reproduce. A generation bug fails here, not
//! in a downstream consumer.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use anyhow::{ensure, Context, Result};
use crashgym_core::evaluator::{
    apply_solve_rates, crash_fix_overlap, localization_report, union_solve,
};
use crashgym_core::fixtures::{load_file_sizes, load_manifest, load_rankings, load_samples, texts_for};
use crashgym_core::model::{BenchSample, BugId, FixClass};
use crashgym_core::outcome::{read_outcomes, TrialOutcome};
use crashgym_core::pct::format_pct;
use crashgym_core::prompt::{assemble, AssembleOutcome, PromptBudget};
use crashgym_core::report::distribution_report;
use crashgym_core::retrieval::{oracle_files, recall_report, RetrievalMode, RetrievalResult};
use crashgym_platform::curator::{read_raw_records, Curator};
use crashgym_platform::resolver::{FixtureProvider, Resolver};
use crashgym_platform::runtime::{SimCosts, SimRuntime};

use crate::design::{self, Role};
use crate::mini;

pub fn run(root: &Path) -> Result<()> {
    let bench_dir = root.join("bench");
    let samples = load_samples(&bench_dir.join("meta.jsonl")).context("reload samples")?;
    ensure!(samples.len() == design::TOTAL, "expected {} samples", design::TOTAL);
    for (idx, sample) in samples.iter().enumerate() {
        ensure!(
            sample.bug_id == design::bug_id(idx),
            "sample {idx} out of order: {}",
            sample.bug_id
        );
    }
    let sizes = load_file_sizes(&bench_dir.join("files.json")).context("reload sizes")?;
    let rankings = load_rankings(&bench_dir.join("rankings.json")).context("reload rankings")?;

    check_distribution(&samples)?;
    let eligible = check_eligibility(&samples, &sizes, &rankings)?;
    check_recall(&samples, &rankings, &eligible)?;
    check_campaigns(root, &samples)?;
    check_overlap(&samples)?;
    check_mini(root)?;
    println!("fixture self-checks passed");
    Ok(())
}

fn check_distribution(samples: &[BenchSample]) -> Result<()> {
    let report = distribution_report(samples).context("distribution report")?;
    ensure!(report.sample_count == design::TOTAL, "sample count");
    let series: Vec<(String, usize)> =
        report.kernel_series.iter().map(|(k, &v)| (k.clone(), v)).collect();
    ensure!(
        series == [("4.x".into(), 26), ("5.x".into(), 141), ("6.x".into(), 112)],
        "kernel series split: {series:?}"
    );
    let classes = &report.fix_classes;
    ensure!(classes[&FixClass::SingleLine] == 33, "single-line count");
    ensure!(classes[&FixClass::SingleFunctionMultiLine] == 145, "single-function count");
    ensure!(classes[&FixClass::MultiFunctionSingleFile] == 57, "multi-function count");
    ensure!(classes[&FixClass::MultiFile] == 44, "multi-file count");
    let years: Vec<(i32, usize)> = report.years.iter().map(|(&y, &c)| (y, c)).collect();
    ensure!(
        years == [(2018, 20), (2019, 20), (2020, 44), (2021, 34), (2022, 82), (2023, 79)],
        "year split: {years:?}"
    );
    ensure!(report.subsystems.len() == 72, "subsystem count: {}", report.subsystems.len());
    ensure!(report.subsystems["net"] == 40, "net count");
    ensure!(report.subsystems["usb"] == 31, "usb count");
    ensure!(report.subsystems["fs"] == 28, "fs count");
    let stats = &report.stats;
    ensure!((stats.lines_changed_avg - 3981.0 / 279.0).abs() < 1e-9, "lines avg");
    ensure!(stats.lines_changed_max == 147, "lines max");
    ensure!((stats.files_changed_avg - 357.0 / 279.0).abs() < 1e-9, "files avg");
    ensure!(stats.files_changed_max == 7, "files max");
    ensure!((stats.crash_lines_avg - 23520.0 / 279.0).abs() < 1e-9, "crash avg");
    ensure!(stats.crash_lines_max == 624, "crash max");
    Ok(())
}

struct EligibleSets {
    bm16: BTreeSet<String>,
    bm50: BTreeSet<String>,
}

/// Assembles every sample under both settings and budgets and checks the
/// eligible sets are exactly the designed index prefixes.
fn check_eligibility(
    samples: &[BenchSample],
    sizes: &crashgym_core::fixtures::FileSizes,
    rankings: &crashgym_core::fixtures::Rankings,
) -> Result<EligibleSets> {
    let cases = [
        (RetrievalMode::Oracle, 16_000, design::MID_START),
        (RetrievalMode::Oracle, 50_000, design::BIG_START),
        (RetrievalMode::Bm25, 16_000, 227),
        (RetrievalMode::Bm25, 50_000, design::HUGE_START),
    ];
    let mut bm_sets: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
    for (mode, budget_tokens, expect) in cases {
        let budget = PromptBudget::new(budget_tokens);
        let mut eligible = BTreeSet::new();
        for (idx, sample) in samples.iter().enumerate() {
            let id = sample.bug_id.as_str();
            let ranked: Vec<String> = match mode {
                RetrievalMode::Oracle => oracle_files(sample).context("oracle files")?,
                RetrievalMode::Bm25 => rankings
                    .get(id)
                    .with_context(|| format!("no ranking for {id}"))?
                    .iter()
                    .take(3)
                    .cloned()
                    .collect(),
            };
            let retrieval = RetrievalResult {
                mode,
                k: ranked.len(),
                scores: vec![0.0; ranked.len()],
                ranked_paths: ranked,
            };
            let texts = texts_for(sizes, id);
            match assemble(sample, &retrieval, &texts, &budget).context("assemble")? {
                AssembleOutcome::Prompt(_) => {
                    ensure!(idx < expect, "{mode}/{budget_tokens}: {id} unexpectedly fits");
                    eligible.insert(id.to_string());
                }
                AssembleOutcome::Skip(reason) => {
                    ensure!(idx >= expect, "{mode}/{budget_tokens}: {id} skipped: {reason}");
                }
            }
        }
        ensure!(
            eligible.len() == expect,
            "{mode}/{budget_tokens}: {} eligible, expected {expect}",
            eligible.len()
        );
        if mode == RetrievalMode::Bm25 {
            bm_sets.insert(budget_tokens, eligible);
        }
    }
    Ok(EligibleSets {
        bm16: bm_sets.remove(&16_000).expect("bm25 16K set"),
        bm50: bm_sets.remove(&50_000).expect("bm25 50K set"),
    })
}

fn check_recall(
    samples: &[BenchSample],
    rankings: &crashgym_core::fixtures::Rankings,
    eligible: &EligibleSets,
) -> Result<()> {
    let mut oracle_sets: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for sample in samples {
        let files: BTreeSet<String> = oracle_files(sample)?.into_iter().collect();
        oracle_sets.insert(sample.bug_id.as_str().to_string(), files);
    }
    let rows = recall_report(
        &oracle_sets,
        rankings,
        &[3, 5, 10, 20],
        &[(16_000, eligible.bm16.clone()), (50_000, eligible.bm50.clone())],
    );
    let expect: [(usize, usize, &str, &str, &str); 8] = [
        (16_000, 3, "1.76", "0.00", "98.24"),
        (16_000, 5, "3.96", "0.44", "95.60"),
        (16_000, 10, "6.61", "0.00", "93.39"),
        (16_000, 20, "9.69", "0.44", "89.87"),
        (50_000, 3, "2.91", "0.00", "97.09"),
        (50_000, 5, "5.09", "0.36", "94.54"),
        (50_000, 10, "7.64", "0.00", "92.36"),
        (50_000, 20, "10.54", "0.36", "89.09"),
    ];
    ensure!(rows.len() == expect.len(), "recall row count {}", rows.len());
    for (row, (budget, k, all, any, none)) in rows.iter().zip(expect) {
        ensure!(
            row.budget == budget
                && row.k == k
                && row.all_pct == all
                && row.any_pct == any
                && row.none_pct == none,
            "recall row mismatch at budget {budget} k {k}: {row:?}"
        );
    }
    Ok(())
}

/// Expected per-log tallies derived straight from the role tables.
struct LogExpect {
    applied_top1: usize,
    solved_top1: usize,
    applied_topn: usize,
    solved_topn: usize,
    complete_by_class: BTreeMap<FixClass, usize>,
    partial_count: usize,
    partial_mean: &'static str,
}

fn expectations(plan: &design::LogPlan) -> LogExpect {
    let mut e = LogExpect {
        applied_top1: 0,
        solved_top1: 0,
        applied_topn: 0,
        solved_topn: 0,
        complete_by_class: BTreeMap::new(),
        partial_count: 0,
        partial_mean: partial_mean(plan),
    };
    let solo = plan.n == 1;
    for (&idx, &role) in &plan.roles {
        match role {
            Role::SolvedC0 => {
                e.applied_top1 += 1;
                e.solved_top1 += 1;
                e.applied_topn += 1;
                e.solved_topn += 1;
                *e.complete_by_class.entry(design::fix_class(idx)).or_default() += 1;
            }
            Role::SolvedC5 => {
                e.applied_topn += 1;
                e.solved_topn += 1;
                *e.complete_by_class.entry(design::fix_class(idx)).or_default() += 1;
            }
            Role::ApplyC0 => {
                e.applied_top1 += 1;
                e.applied_topn += 1;
            }
            Role::ApplyC5 => e.applied_topn += 1,
            Role::Extra => {
                *e.complete_by_class.entry(design::fix_class(idx)).or_default() += 1;
            }
            Role::Partial { .. } => e.partial_count += 1,
            Role::Rest => {}
        }
        if solo {
            assert!(!matches!(role, Role::SolvedC5 | Role::ApplyC5));
        }
    }
    e
}

fn partial_mean(plan: &design::LogPlan) -> &'static str {
    match (plan.model, plan.setting) {
        ("gpt-4-turbo", RetrievalMode::Oracle) => "31.60",
        ("gpt-3.5-turbo", RetrievalMode::Oracle) => "47.92",
        ("claude-3-sonnet", RetrievalMode::Oracle) => "38.16",
        ("gemini-1.5-pro", RetrievalMode::Oracle) => "36.29",
        ("gpt-4-turbo", RetrievalMode::Bm25) => "29.17",
        ("gpt-3.5-turbo", RetrievalMode::Bm25) => "39.58",
        ("claude-3-sonnet", RetrievalMode::Bm25) => "45.83",
        ("gemini-1.5-pro", RetrievalMode::Bm25) => "50.00",
        other => unreachable!("unplanned log {other:?}"),
    }
}

fn check_campaigns(root: &Path, samples: &[BenchSample]) -> Result<()> {
    let dir = root.join("outcomes");
    let manifest = load_manifest(&dir.join("models.json")).context("reload manifest")?;
    let plans = design::log_plans();
    ensure!(manifest.len() == plans.len(), "manifest entries");
    let mut logs: Vec<Vec<TrialOutcome>> = Vec::new();
    for (spec, plan) in manifest.iter().zip(&plans) {
        ensure!(spec.model == plan.model && spec.setting == plan.setting, "manifest order");
        let log = read_outcomes(&dir.join(&spec.log))
            .with_context(|| format!("reload {}", spec.log))?;
        ensure!(log.len() == plan.eligible * plan.n, "{}: row count {}", spec.log, log.len());
        for row in &log {
            row.validate().with_context(|| format!("{}: invalid row", spec.log))?;
            ensure!(row.setting == plan.setting, "{}: row setting", spec.log);
        }
        check_one_campaign(plan, &log, samples)?;
        logs.push(log);
    }

    let headline = apply_solve_rates(&logs[0], design::TOTAL, 10);
    ensure!(headline.apply_pct == "56.99", "headline apply: {}", headline.apply_pct);
    ensure!(headline.solve_pct == "5.38", "headline solve: {}", headline.solve_pct);
    let headline_b = apply_solve_rates(&logs[4], design::TOTAL, 10);
    ensure!(headline_b.apply_pct == "55.20", "retrieval apply: {}", headline_b.apply_pct);
    ensure!(headline_b.solve_pct == "0.72", "retrieval solve: {}", headline_b.solve_pct);

    let slices: Vec<&[TrialOutcome]> = logs.iter().map(Vec::as_slice).collect();
    let union = union_solve(&slices, design::TOTAL);
    ensure!(union.unique_solved == 29, "union unique: {}", union.unique_solved);
    ensure!(union.total_solve_outcomes == 36, "union total: {}", union.total_solve_outcomes);
    ensure!(union.union_pct == "10.39", "union pct: {}", union.union_pct);
    Ok(())
}

fn check_one_campaign(
    plan: &design::LogPlan,
    log: &[TrialOutcome],
    samples: &[BenchSample],
) -> Result<()> {
    let expect = expectations(plan);
    let top1 = apply_solve_rates(log, design::TOTAL, 1);
    ensure!(
        top1.applied_bugs == expect.applied_top1 && top1.solved_bugs == expect.solved_top1,
        "{}/{}: top-1 {}/{} expected {}/{}",
        plan.model,
        plan.setting,
        top1.applied_bugs,
        top1.solved_bugs,
        expect.applied_top1,
        expect.solved_top1
    );
    let topn = apply_solve_rates(log, design::TOTAL, plan.n);
    ensure!(
        topn.applied_bugs == expect.applied_topn && topn.solved_bugs == expect.solved_topn,
        "{}/{}: top-{} {}/{} expected {}/{}",
        plan.model,
        plan.setting,
        plan.n,
        topn.applied_bugs,
        topn.solved_bugs,
        expect.applied_topn,
        expect.solved_topn
    );
    ensure!(
        topn.apply_pct == format_pct(expect.applied_topn, design::TOTAL),
        "{}/{}: apply pct {}",
        plan.model,
        plan.setting,
        topn.apply_pct
    );

    let loc = localization_report(log, samples).context("localization")?;
    let complete_total: usize = expect.complete_by_class.values().sum();
    ensure!(loc.evaluated == plan.eligible, "{}: evaluated {}", plan.model, loc.evaluated);
    ensure!(
        loc.complete_total == complete_total,
        "{}/{}: complete {} expected {complete_total}",
        plan.model,
        plan.setting,
        loc.complete_total
    );
    ensure!(
        loc.complete_by_class == expect.complete_by_class,
        "{}/{}: complete by class {:?}",
        plan.model,
        plan.setting,
        loc.complete_by_class
    );
    ensure!(
        loc.partial_count == expect.partial_count,
        "{}/{}: partial {} expected {}",
        plan.model,
        plan.setting,
        loc.partial_count,
        expect.partial_count
    );
    ensure!(
        loc.partial_mean_recall_pct == expect.partial_mean,
        "{}/{}: partial mean {} expected {}",
        plan.model,
        plan.setting,
        loc.partial_mean_recall_pct,
        expect.partial_mean
    );
    let none = plan.eligible - complete_total - expect.partial_count;
    ensure!(loc.none_count == none, "{}: none {} expected {none}", plan.model, loc.none_count);
    Ok(())
}

fn check_overlap(samples: &[BenchSample]) -> Result<()> {
    let subset = |count: usize| -> BTreeSet<BugId> { (0..count).map(design::bug_id).collect() };
    let bm = crash_fix_overlap(samples, &subset(design::HUGE_START))?;
    ensure!(
        (bm.complete, bm.partial, bm.none) == (75, 45, 155),
        "retrieval overlap: {bm:?}"
    );
    let oracle = crash_fix_overlap(samples, &subset(227))?;
    ensure!(
        (oracle.complete, oracle.partial, oracle.none) == (67, 39, 121),
        "oracle overlap: {oracle:?}"
    );
    Ok(())
}

fn check_mini(root: &Path) -> Result<()> {
    mini::self_check();
    let mini_dir = root.join("mini");
    let repo = mini_dir.join("repo.json");
    let repo_url = repo.to_str().context("repo path utf-8")?;
    let raws = read_raw_records(&mini_dir.join("raws.jsonl")).context("reload raws")?;
    ensure!(raws.len() == mini::RAW_COUNT, "raw count {}", raws.len());

    let home = tempfile::tempdir().context("sim home")?;
    let mut runner =
        SimRuntime::open(home.path(), 2, 2, SimCosts::fast()).context("open sim runtime")?;

    let mut curator = Curator::new(repo_url).context("open curator")?;
    let build = curator.build_dataset(&mut runner, &raws).context("curate")?;
    ensure!(build.samples.len() == mini::CURATED, "curated {}", build.samples.len());
    ensure!(build.quarantined.is_empty(), "quarantined: {:?}", build.quarantined);
    let rejected: Vec<(&str, bool, bool, bool)> = build
        .rejected
        .iter()
        .map(|r| {
            (
                r.bug_id.as_str(),
                r.verdict.check1_bug_crashes,
                r.verdict.check2_parent_crashes,
                r.verdict.check3_fix_clean,
            )
        })
        .collect();
    ensure!(
        rejected
            == [
                ("mini-20", false, true, true),
                ("mini-21", true, false, true),
                ("mini-22", true, true, false),
            ],
        "rejections: {rejected:?}"
    );

    let mut resolver =
        Resolver::new(repo_url, RetrievalMode::Oracle).context("open resolver")?;
    let mut provider = FixtureProvider::new(mini_dir.join("providers"));
    let log_path = home.path().join("mini-campaign.jsonl");
    let summary = resolver
        .run_campaign(&mut runner, &build.samples, &mut provider, &log_path)
        .context("mini campaign")?;
    ensure!(summary.completed == mini::CURATED, "campaign completed {}", summary.completed);
    ensure!(summary.skipped.is_empty(), "campaign skips: {:?}", summary.skipped);
    ensure!(summary.quarantined.is_empty(), "campaign quarantines: {:?}", summary.quarantined);

    let outcomes = read_outcomes(&log_path).context("reload mini log")?;
    ensure!(outcomes.len() == mini::CURATED, "mini rows {}", outcomes.len());
    let solved: Vec<&str> =
        outcomes.iter().filter(|o| o.resolved).map(|o| o.bug_id.as_str()).collect();
    let expect_solved: Vec<String> =
        (0..mini::SOLVED).map(|i| mini::bug_id(i).as_str().to_string()).collect();
    ensure!(solved == expect_solved, "mini solved: {solved:?}");
    let rates = apply_solve_rates(&outcomes, mini::CURATED, 1);
    ensure!(rates.apply_pct == "25.00", "mini apply: {}", rates.apply_pct);
    ensure!(rates.solve_pct == "25.00", "mini solve: {}", rates.solve_pct);
    Ok(())
}
