//! Dataset distribution reports and the CSV renderings of every metric
//! table the platform emits.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::evaluator::{ApplySolveRates, LocalizationReport, OverlapCounts};
use crate::model::{self, BenchSample, FixClass, ModelError, SummaryStats};
use crate::retrieval::{RecallRow, RetrievalMode};

/// Per-dataset distribution tables: kernel series, fix shapes, years,
/// subsystems, and size statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionReport {
    pub sample_count: usize,
    pub kernel_series: BTreeMap<String, usize>,
    pub fix_classes: BTreeMap<FixClass, usize>,
    pub years: BTreeMap<i32, usize>,
    pub subsystems: BTreeMap<String, usize>,
    pub stats: SummaryStats,
}

pub fn distribution_report(samples: &[BenchSample]) -> Result<DistributionReport, ModelError> {
    let mut report = DistributionReport {
        sample_count: samples.len(),
        kernel_series: BTreeMap::new(),
        fix_classes: BTreeMap::new(),
        years: BTreeMap::new(),
        subsystems: BTreeMap::new(),
        stats: model::fix_stats(samples)?,
    };
    for sample in samples {
        *report.kernel_series.entry(sample.kernel_series()).or_default() += 1;
        let class = model::classify_fix(&sample.parsed_gold_fix()?);
        *report.fix_classes.entry(class).or_default() += 1;
        *report.years.entry(sample.fix_year).or_default() += 1;
        *report.subsystems.entry(sample.subsystem.clone()).or_default() += 1;
    }
    Ok(report)
}

fn csv_escape(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Apply/solve table: one row per (model, setting, n) triple.
pub fn apply_solve_csv(rows: &[(String, RetrievalMode, ApplySolveRates)]) -> String {
    let mut out = String::from("model,setting,n,applied_bugs,apply_pct,solved_bugs,solve_pct\n");
    for (model, setting, rates) in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            csv_escape(model),
            setting,
            rates.n,
            rates.applied_bugs,
            rates.apply_pct,
            rates.solved_bugs,
            rates.solve_pct
        ));
    }
    out
}

/// Recall table in the fixed column order (k, budget, all, any, none).
pub fn recall_csv(rows: &[RecallRow]) -> String {
    let mut out = String::from("k,budget,all_pct,any_pct,none_pct\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            row.k, row.budget, row.all_pct, row.any_pct, row.none_pct
        ));
    }
    out
}

/// Localization table: complete counts per fix shape plus partial stats.
pub fn localization_csv(rows: &[(String, RetrievalMode, LocalizationReport)]) -> String {
    let mut out = String::from(
        "model,setting,complete_total,single_line,single_function_multi_line,\
         multi_function_single_file,multi_file,partial_count,partial_mean_recall_pct\n",
    );
    for (model, setting, report) in rows {
        let by = |class: FixClass| report.complete_by_class.get(&class).copied().unwrap_or(0);
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            csv_escape(model),
            setting,
            report.complete_total,
            by(FixClass::SingleLine),
            by(FixClass::SingleFunctionMultiLine),
            by(FixClass::MultiFunctionSingleFile),
            by(FixClass::MultiFile),
            report.partial_count,
            report.partial_mean_recall_pct
        ));
    }
    out
}

/// Crash↔fix overlap tallies per setting subset.
pub fn crash_overlap_csv(rows: &[(RetrievalMode, OverlapCounts)]) -> String {
    let mut out = String::from("setting,complete,partial,none,total\n");
    for (setting, counts) in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            setting,
            counts.complete,
            counts.partial,
            counts.none,
            counts.total()
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crash::CrashReport;
    use crate::model::{BugId, CommitId, Reproducer, ReproducerKind};

    fn sample(bug: &str, version: &str, year: i32, subsystem: &str) -> BenchSample {
        BenchSample {
            bug_id: BugId::from(bug),
            commit_bug: CommitId::from("a".repeat(40)),
            config: String::new(),
            reproducer: Reproducer::from_bytes(ReproducerKind::MockScript, b"r"),
            commit_fix: CommitId::from("b".repeat(40)),
            commit_parent: CommitId::from("c".repeat(40)),
            crash_parent: CrashReport::from_console("BUG: x\n").unwrap(),
            gold_fix: "--- a/f.c\n+++ b/f.c\n@@ -1 +1 @@ void f(void)\n-a\n+b\n".into(),
            bisect: None,
            email_refs: vec![],
            subsystem: subsystem.into(),
            kernel_version: version.into(),
            fix_year: year,
        }
    }

    #[test]
    fn distribution_counts_by_series_class_and_year() {
        let samples = vec![
            sample("b1", "5.15.2", 2022, "fs"),
            sample("b2", "5.10.0", 2021, "net"),
            sample("b3", "6.1.0", 2022, "fs"),
        ];
        let report = distribution_report(&samples).unwrap();
        assert_eq!(report.sample_count, 3);
        assert_eq!(report.kernel_series["5.x"], 2);
        assert_eq!(report.kernel_series["6.x"], 1);
        assert_eq!(report.fix_classes[&FixClass::SingleLine], 3);
        assert_eq!(report.years[&2022], 2);
        assert_eq!(report.subsystems["fs"], 2);
        assert!((report.stats.lines_changed_avg - 2.0).abs() < 1e-12);
    }

    #[test]
    fn empty_dataset_reports_cleanly() {
        let report = distribution_report(&[]).unwrap();
        assert_eq!(report.sample_count, 0);
        assert!(report.kernel_series.is_empty());
        assert_eq!(report.stats, SummaryStats::zero());
    }

    #[test]
    fn csv_shapes() {
        let rates = ApplySolveRates {
            dataset_size: 279,
            n: 10,
            applied_bugs: 159,
            solved_bugs: 15,
            apply_pct: "56.99".into(),
            solve_pct: "5.38".into(),
        };
        let csv = apply_solve_csv(&[("gpt-4-turbo".into(), RetrievalMode::Oracle, rates)]);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "model,setting,n,applied_bugs,apply_pct,solved_bugs,solve_pct");
        assert_eq!(lines.next().unwrap(), "gpt-4-turbo,oracle,10,159,56.99,15,5.38");

        let field = csv_escape("weird,\"name\"");
        assert_eq!(field, "\"weird,\"\"name\"\"\"");
    }
}
