//! Kernel console parsing: crash titles, stack frames, and the
//! [`CrashReport`] value stored with every benchmark sample.

use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Report-line prefixes that mark the start of a crash, in priority order.
/// A line matches after its timestamp brackets are stripped.
pub const DETECTOR_PREFIXES: [&str; 10] = [
    "BUG:",
    "KASAN:",
    "KMSAN:",
    "KCSAN:",
    "WARNING:",
    "Kernel panic",
    "general protection fault",
    "UBSAN:",
    "INFO: task hung",
    "kernel BUG at",
];

/// One stack-trace frame recovered from the console.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame {
    pub function_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_file: Option<String>,
}

/// A captured crash: the full console text plus derived fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrashReport {
    pub raw_console: String,
    pub crash_title: String,
    pub frames: Vec<Frame>,
    pub line_count: usize,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CrashError {
    #[error("crash report is empty")]
    EmptyReport,
    #[error("line_count {stored} does not match console ({actual} lines)")]
    LineCountMismatch { stored: usize, actual: usize },
    #[error("crash_title is not a substring of the console text")]
    TitleNotInConsole,
}

impl CrashReport {
    /// Parse a console capture into a report. Fails only on empty input.
    pub fn from_console(raw: &str) -> Result<Self, CrashError> {
        let crash_title = extract_crash_title(raw)?;
        Ok(CrashReport {
            raw_console: raw.to_string(),
            crash_title,
            frames: extract_frames(raw),
            line_count: raw.lines().count(),
        })
    }

    /// Re-check the derived-field invariants of a deserialized report.
    pub fn validate(&self) -> Result<(), CrashError> {
        let actual = self.raw_console.lines().count();
        if self.line_count != actual {
            return Err(CrashError::LineCountMismatch { stored: self.line_count, actual });
        }
        if self.crash_title.is_empty() || !self.raw_console.contains(&self.crash_title) {
            return Err(CrashError::TitleNotInConsole);
        }
        Ok(())
    }

    /// Distinct function names across all frames.
    pub fn function_names(&self) -> BTreeSet<String> {
        self.frames.iter().map(|f| f.function_name.clone()).collect()
    }
}

/// Strip leading `[  12.345678]`-style timestamp/task brackets.
fn strip_brackets(line: &str) -> &str {
    let mut rest = line;
    loop {
        let trimmed = rest.trim_start();
        if let Some(after_open) = trimmed.strip_prefix('[') {
            if let Some(close) = after_open.find(']') {
                rest = &after_open[close + 1..];
                continue;
            }
        }
        return trimmed;
    }
}

/// Title of the first crash line in console order; falls back to the first
/// non-empty line when no detector fires.
pub fn extract_crash_title(raw: &str) -> Result<String, CrashError> {
    extract_crash_title_with(&DETECTOR_PREFIXES, raw)
}

/// Same as [`extract_crash_title`] with a caller-supplied detector list.
pub fn extract_crash_title_with(detectors: &[&str], raw: &str) -> Result<String, CrashError> {
    let mut fallback: Option<&str> = None;
    for line in raw.lines() {
        let stripped = strip_brackets(line).trim_end();
        if stripped.is_empty() {
            continue;
        }
        if detectors.iter().any(|d| stripped.starts_with(d)) {
            return Ok(stripped.to_string());
        }
        fallback.get_or_insert(stripped);
    }
    fallback.map(str::to_string).ok_or(CrashError::EmptyReport)
}

static FRAME_LINE: LazyLock<Regex> = LazyLock::new(|| {
    // `name+0xoff/0xsize [file:line]`, optionally behind a `RIP: nnnn:` tag.
    Regex::new(
        r"^(?:RIP: [0-9a-f]+:)?([A-Za-z_][A-Za-z0-9_.]*)\+0x[0-9a-f]+/0x[0-9a-f]+(?:\s+([^\s:]+):(\d+))?\s*$",
    )
    .expect("static regex")
});

/// Pull stack frames out of a console capture, in order of appearance.
pub fn extract_frames(raw: &str) -> Vec<Frame> {
    let mut frames = Vec::new();
    for line in raw.lines() {
        let stripped = strip_brackets(line);
        if let Some(caps) = FRAME_LINE.captures(stripped) {
            frames.push(Frame {
                function_name: caps[1].to_string(),
                source_file: caps.get(2).map(|m| m.as_str().to_string()),
            });
        }
    }
    frames
}

#[cfg(test)]
mod tests {
    use super::*;

    const CONSOLE: &str = concat!(
        "[   12.345678] booting kernel version 5.15\n",
        "[   13.000001][ T1042] BUG: KASAN: use-after-free in foo_ioctl\n",
        "[   13.000002] Call Trace:\n",
        "[   13.000003]  foo_ioctl+0x1a2/0x4c0 drivers/foo/foo.c:211\n",
        "[   13.000004]  do_syscall_64+0x3f/0x110\n",
        "[   13.000005]  entry_SYSCALL_64_after_hwframe+0x44/0xae\n",
    );

    #[test]
    fn title_is_first_detector_line() {
        let title = extract_crash_title(CONSOLE).unwrap();
        assert_eq!(title, "BUG: KASAN: use-after-free in foo_ioctl");
        assert!(CONSOLE.contains(&title));
    }

    #[test]
    fn line_order_beats_detector_order() {
        let log = "[ 1.0] WARNING: at fs/x.c:10 foo\n[ 2.0] BUG: KASAN: uaf in bar\n";
        assert_eq!(extract_crash_title(log).unwrap(), "WARNING: at fs/x.c:10 foo");
    }

    #[test]
    fn fallback_to_first_nonempty_line() {
        let log = "\n\n[ 0.1] booted fine\nnothing interesting\n";
        assert_eq!(extract_crash_title(log).unwrap(), "booted fine");
    }

    #[test]
    fn empty_console_is_an_error() {
        assert_eq!(extract_crash_title(""), Err(CrashError::EmptyReport));
        assert_eq!(extract_crash_title("\n  \n"), Err(CrashError::EmptyReport));
    }

    #[test]
    fn frames_with_and_without_files() {
        let report = CrashReport::from_console(CONSOLE).unwrap();
        assert_eq!(report.frames.len(), 3);
        assert_eq!(report.frames[0].function_name, "foo_ioctl");
        assert_eq!(report.frames[0].source_file.as_deref(), Some("drivers/foo/foo.c"));
        assert_eq!(report.frames[1].function_name, "do_syscall_64");
        assert_eq!(report.frames[1].source_file, None);
        assert_eq!(
            report.function_names(),
            ["foo_ioctl", "do_syscall_64", "entry_SYSCALL_64_after_hwframe"]
                .into_iter()
                .map(String::from)
                .collect()
        );
    }

    #[test]
    fn report_invariants_hold_and_are_checked() {
        let report = CrashReport::from_console(CONSOLE).unwrap();
        assert_eq!(report.line_count, 6);
        report.validate().unwrap();

        let mut tampered = report.clone();
        tampered.line_count = 99;
        assert!(matches!(tampered.validate(), Err(CrashError::LineCountMismatch { .. })));

        let mut retitled = report;
        retitled.crash_title = "not present".into();
        assert_eq!(retitled.validate(), Err(CrashError::TitleNotInConsole));
    }

    #[test]
    fn rip_frames_are_recognized() {
        let log = "BUG: unable to handle page fault\nRIP: 0010:bar_write+0x12/0x80 fs/bar.c:44\n";
        let frames = extract_frames(log);
        assert_eq!(frames.len(), 1);
        assert_eq!(frames[0].function_name, "bar_write");
        assert_eq!(frames[0].source_file.as_deref(), Some("fs/bar.c"));
    }
}
