//! Repair-prompt assembly: renders the fixed prompt template under a
//! context-token budget, capping the crash report and packing retrieved
//! files according to the retrieval setting's eligibility rules.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::BenchSample;
use crate::retrieval::{RetrievalMode, RetrievalResult};

/// The versioned prompt template. `{CRASH TEXT}` and the worked
/// `[start of file_1]…` section are placeholders; everything else is
/// rendered verbatim, trailing spaces included.
pub const TEMPLATE: &str = include_str!("repair_template.txt");

const CRASH_PLACEHOLDER: &str = "{CRASH TEXT}";
const CODE_PLACEHOLDER: &str = "[start of file_1]\n{file_1 text}\n[end of file_1]\n[start of file_2]\n{file_2 text}\n[end of file_2]\n....\n";

/// Tokens held back from the context window so the model has room to
/// answer.
pub const RESERVED_OUTPUT_TOKENS: usize = 1024;

/// Default crash-report cap within the prompt.
pub const DEFAULT_CRASH_CAP_TOKENS: usize = 10_000;

/// Deterministic default token estimator: one token per four bytes,
/// rounded up.
pub fn estimate_tokens(text: &str) -> usize {
    text.len().div_ceil(4)
}

/// Context budget plus the estimator used to enforce it.
#[derive(Debug, Clone, Copy)]
pub struct PromptBudget {
    pub max_context_tokens: usize,
    pub crash_cap_tokens: usize,
    pub estimator: fn(&str) -> usize,
}

impl PromptBudget {
    /// Standard budget: default crash cap and byte-based estimator.
    pub fn new(max_context_tokens: usize) -> Self {
        Self::with_crash_cap(max_context_tokens, DEFAULT_CRASH_CAP_TOKENS)
    }

    pub fn with_crash_cap(max_context_tokens: usize, crash_cap_tokens: usize) -> Self {
        assert!(
            crash_cap_tokens < max_context_tokens,
            "crash cap must leave room for the rest of the prompt"
        );
        PromptBudget { max_context_tokens, crash_cap_tokens, estimator: estimate_tokens }
    }

    /// Tokens available for prompt text once output headroom is reserved.
    pub fn packing_limit(&self) -> usize {
        self.max_context_tokens.saturating_sub(RESERVED_OUTPUT_TOKENS)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssembledPrompt {
    pub text: String,
    pub included_files: Vec<String>,
    pub token_estimate: usize,
    pub setting: RetrievalMode,
}

/// Why a sample was skipped rather than prompted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SkipReason {
    /// Oracle setting: the gold-fix files do not all fit in the budget.
    OracleFilesExceedBudget,
    /// Retrieval setting: not even the top-ranked file fits.
    NoRetrievedFileFits,
}

impl std::fmt::Display for SkipReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SkipReason::OracleFilesExceedBudget => f.write_str("oracle files exceed budget"),
            SkipReason::NoRetrievedFileFits => f.write_str("no retrieved file fits"),
        }
    }
}

/// Assembly produces either a prompt or a deliberate skip; both are
/// ordinary values.
#[derive(Debug, Clone, PartialEq)]
pub enum AssembleOutcome {
    Prompt(AssembledPrompt),
    Skip(SkipReason),
}

impl AssembleOutcome {
    pub fn prompt(&self) -> Option<&AssembledPrompt> {
        match self {
            AssembleOutcome::Prompt(p) => Some(p),
            AssembleOutcome::Skip(_) => None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("file path {path:?} collides with the template fence markers")]
    TemplateError { path: String },
    #[error("retrieved file {path} has no recorded text")]
    MissingFileText { path: String },
}

/// Sidecar record written next to each emitted prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSidecar {
    pub bug_id: String,
    pub setting: RetrievalMode,
    pub included_files: Vec<String>,
    pub token_estimate: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skip_reason: Option<SkipReason>,
}

/// Render the repair prompt for one sample, or skip it.
///
/// Oracle setting: every retrieved (gold) file must fit, else the sample
/// is skipped. Retrieval setting: files are added in rank order and
/// packing stops at the first file that does not fit; the sample is
/// skipped only when nothing fits.
pub fn assemble(
    sample: &BenchSample,
    retrieval: &RetrievalResult,
    file_texts: &BTreeMap<String, String>,
    budget: &PromptBudget,
) -> Result<AssembleOutcome, PromptError> {
    let crash_text = truncate_crash(
        &sample.crash_parent.raw_console,
        &sample.crash_parent.crash_title,
        budget,
    );
    let limit = budget.packing_limit();

    let fence_of = |path: &str| -> Result<String, PromptError> {
        if path.contains('[') || path.contains(']') || path.contains('\n') {
            return Err(PromptError::TemplateError { path: path.to_string() });
        }
        let text = file_texts
            .get(path)
            .ok_or_else(|| PromptError::MissingFileText { path: path.to_string() })?;
        let newline = if text.is_empty() || text.ends_with('\n') { "" } else { "\n" };
        Ok(format!("[start of {path}]\n{text}{newline}[end of {path}]\n"))
    };

    match retrieval.mode {
        RetrievalMode::Oracle => {
            let mut code = String::new();
            for path in &retrieval.ranked_paths {
                code.push_str(&fence_of(path)?);
            }
            let text = render(&crash_text, &code);
            if (budget.estimator)(&text) > limit {
                return Ok(AssembleOutcome::Skip(SkipReason::OracleFilesExceedBudget));
            }
            Ok(AssembleOutcome::Prompt(AssembledPrompt {
                token_estimate: (budget.estimator)(&text),
                text,
                included_files: retrieval.ranked_paths.clone(),
                setting: RetrievalMode::Oracle,
            }))
        }
        RetrievalMode::Bm25 => {
            let mut code = String::new();
            let mut included = Vec::new();
            for path in &retrieval.ranked_paths {
                let fence = fence_of(path)?;
                let candidate = render(&crash_text, &format!("{code}{fence}"));
                if (budget.estimator)(&candidate) > limit {
                    break;
                }
                code.push_str(&fence);
                included.push(path.clone());
            }
            if included.is_empty() {
                return Ok(AssembleOutcome::Skip(SkipReason::NoRetrievedFileFits));
            }
            let text = render(&crash_text, &code);
            Ok(AssembleOutcome::Prompt(AssembledPrompt {
                token_estimate: (budget.estimator)(&text),
                text,
                included_files: included,
                setting: RetrievalMode::Bm25,
            }))
        }
    }
}

fn render(crash_text: &str, code_section: &str) -> String {
    let (head, rest) =
        TEMPLATE.split_once(CRASH_PLACEHOLDER).expect("template has a crash placeholder");
    let (mid, tail) =
        rest.split_once(CODE_PLACEHOLDER).expect("template has a code placeholder");
    let mut out = String::with_capacity(
        head.len() + crash_text.len() + mid.len() + code_section.len() + tail.len(),
    );
    out.push_str(head);
    out.push_str(crash_text);
    out.push_str(mid);
    out.push_str(code_section);
    out.push_str(tail);
    out
}

/// Head-preserving, line-granular truncation of the console text to the
/// crash cap. The line carrying the crash title survives truncation even
/// when it falls past the cut.
pub fn truncate_crash(raw_console: &str, crash_title: &str, budget: &PromptBudget) -> String {
    let estimator = budget.estimator;
    let cap = budget.crash_cap_tokens;
    let lines: Vec<&str> = raw_console.lines().collect();
    let title_idx = lines.iter().position(|l| l.contains(crash_title));

    let mut kept = 0usize;
    let mut used = 0usize;
    for line in &lines {
        let cost = estimator(&format!("{line}\n"));
        if used + cost > cap {
            break;
        }
        used += cost;
        kept += 1;
    }
    if kept == lines.len() {
        return lines.join("\n");
    }
    match title_idx {
        Some(t) if t >= kept => {
            // Make room for the title line at the tail of the head block.
            let title_cost = estimator(&format!("{}\n", lines[t]));
            while kept > 0 && used + title_cost > cap {
                used -= estimator(&format!("{}\n", lines[kept - 1]));
                kept -= 1;
            }
            let mut out: Vec<&str> = lines[..kept].to_vec();
            out.push(lines[t]);
            out.join("\n")
        }
        _ => lines[..kept].join("\n"),
    }
}

/// What a rendered prompt contained, recovered purely from its text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedPrompt {
    pub crash_text: String,
    pub files: Vec<(String, String)>,
}

/// Invert [`assemble`]'s rendering: recover the crash block and the
/// included files from prompt text.
pub fn parse_prompt(text: &str) -> Option<ParsedPrompt> {
    let after_issue = text.split_once("<issue>\n")?.1;
    let (crash_text, rest) = after_issue.split_once("\n</issue>\n")?;
    let code = rest.split_once("<code>\n")?.1;
    let (code, _) = code.split_once("</code>\n")?;
    let mut files = Vec::new();
    let mut cursor = code;
    while !cursor.is_empty() {
        let after_start = cursor.strip_prefix("[start of ")?;
        let (path, body) = after_start.split_once("]\n")?;
        let end_marker = format!("[end of {path}]\n");
        let (content, rest) = body.split_once(&end_marker)?;
        files.push((path.to_string(), content.to_string()));
        cursor = rest;
    }
    Some(ParsedPrompt { crash_text: crash_text.to_string(), files })
}
