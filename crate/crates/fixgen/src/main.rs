//! Regenerates the shipped fixture corpus under `fixtures/`.
//!
//! Usage: `crashgym-fixgen [--check] [OUT_DIR]`. The default output
//! directory is `fixtures/` next to the workspace root. `--check`
//! regenerates into the target, fails if anything differs from what was
//! already there, and always runs the full self-check battery.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use crashgym_core::fixtures::{save_file_sizes, save_manifest, save_rankings, save_samples};
use crashgym_core::outcome::write_outcomes;

mod bench;
mod design;
mod mini;
mod outcomes;
mod verify;

fn main() -> Result<()> {
    let mut check = false;
    let mut out: Option<PathBuf> = None;
    for arg in std::env::args().skip(1) {
        match arg.as_str() {
            "--check" => check = true,
            "--help" | "-h" => {
                println!("usage: crashgym-fixgen [--check] [OUT_DIR]");
                return Ok(());
            }
            other if out.is_none() => out = Some(PathBuf::from(other)),
            other => bail!("unexpected argument: {other}"),
        }
    }
    let root = out.unwrap_or_else(default_root);

    let staged = stage()?;
    let mut changed = Vec::new();
    for (rel, bytes) in &staged {
        let path = root.join(rel);
        let existing = fs::read(&path).ok();
        if existing.as_deref() != Some(bytes.as_slice()) {
            changed.push(rel.clone());
            if !check {
                if let Some(dir) = path.parent() {
                    fs::create_dir_all(dir)
                        .with_context(|| format!("create {}", dir.display()))?;
                }
                fs::write(&path, bytes).with_context(|| format!("write {}", path.display()))?;
            }
        }
    }
    if check && !changed.is_empty() {
        bail!("fixtures out of date: {}", changed.join(", "));
    }
    println!(
        "{} files under {} ({} {})",
        staged.len(),
        root.display(),
        changed.len(),
        if check { "would change" } else { "rewritten" }
    );

    verify::run(&root)
}

fn default_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

/// Serializes the whole corpus into (relative path, bytes) pairs; files
/// go through the same writers the platform reads with.
fn stage() -> Result<Vec<(String, Vec<u8>)>> {
    let tmp = tempfile::tempdir().context("staging dir")?;
    let corpus = bench::generate();
    let mut staged: Vec<(String, Vec<u8>)> = Vec::new();
    let mut via = |rel: &str, write: &dyn Fn(&Path) -> Result<()>| -> Result<()> {
        let path = tmp.path().join(rel.replace('/', "_"));
        write(&path)?;
        staged.push((rel.to_string(), fs::read(&path).context("read staged file")?));
        Ok(())
    };

    via("bench/meta.jsonl", &|p| {
        save_samples(p, &corpus.samples).context("save samples")
    })?;
    via("bench/files.json", &|p| save_file_sizes(p, &corpus.sizes).context("save sizes"))?;
    via("bench/rankings.json", &|p| {
        save_rankings(p, &corpus.rankings).context("save rankings")
    })?;

    let logs = outcomes::generate(&corpus.samples);
    let manifest: Vec<_> = logs.iter().map(|l| l.spec.clone()).collect();
    via("outcomes/models.json", &|p| save_manifest(p, &manifest).context("save manifest"))?;
    for log in &logs {
        via(&format!("outcomes/{}", log.spec.log), &|p| {
            write_outcomes(p, &log.outcomes).context("save log")
        })?;
    }

    let repo = serde_json::to_string_pretty(&mini::repo()).context("encode repo")? + "\n";
    staged.push(("mini/repo.json".to_string(), repo.into_bytes()));
    let mut raws = String::new();
    for raw in mini::raws() {
        raws.push_str(&serde_json::to_string(&raw).context("encode raw")?);
        raws.push('\n');
    }
    staged.push(("mini/raws.jsonl".to_string(), raws.into_bytes()));
    for i in 0..mini::CURATED {
        staged.push((
            format!("mini/providers/{}/0.txt", mini::bug_id(i).as_str()),
            mini::provider_output(i).into_bytes(),
        ));
    }

    staged.push(("README.md".to_string(), README.as_bytes().to_vec()));
    Ok(staged)
}

const README: &str = "\
# Fixtures

Generated corpus; regenerate with `cargo run -p crashgym-fixgen` and
check freshness with `cargo run -p crashgym-fixgen -- --check`. Do not
edit by hand — the generator verifies every file on disk byte for byte.

## bench/

A 279-entry benchmark: `meta.jsonl` (one sample per line), `files.json`
(recorded source-file sizes per bug), `rankings.json` (recorded ranked
retrieval per bug). The entries are synthetic but shaped to reproduce
the reference aggregate numbers the evaluator tests pin: distribution
tables, prompt-eligibility counts per setting and budget
(117/228/227/275), retrieval recall at k in {3,5,10,20}, and the
crash/fix overlap tallies (75/45/155 and 67/39/121).

## outcomes/

Eight recorded resolution campaigns (`models.json` is the manifest).
The logs reproduce the reference apply/solve rates — 56.99%/5.38% for
the strongest full-context run, 55.20%/0.72% for its retrieval
counterpart, a 29-bug solved union (10.39%) — and the localization
tables: complete counts 22/51/52/54 by fix shape, partial counts
18/12/28/22 with their mean-recall figures.

## mini/

A 23-record end-to-end corpus against a mock repository (`repo.json`):
curation rejects exactly three records (one per validation check), and
a campaign over the 20 curated bugs with the recorded outputs under
`providers/` resolves five — a 25.00% solve rate.
";
