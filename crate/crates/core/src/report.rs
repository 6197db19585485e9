//! Machine-readable verification reports: check records, summaries, and
//! atomic JSON/CSV emission with deterministic content.

use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
}

/// One verification check. `status` is pass iff `max_residual <= tolerance`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckRecord {
    pub id: String,
    pub paper_ref: String,
    pub status: CheckStatus,
    pub max_residual: f64,
    pub tolerance: f64,
    pub sample_count: usize,
    pub runtime_ms: u64,
}

impl CheckRecord {
    pub fn new(
        id: impl Into<String>,
        paper_ref: impl Into<String>,
        max_residual: f64,
        tolerance: f64,
        sample_count: usize,
        runtime_ms: u64,
    ) -> Self {
        let status = if max_residual <= tolerance && max_residual.is_finite() {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        };
        CheckRecord {
            id: id.into(),
            paper_ref: paper_ref.into(),
            status,
            max_residual,
            tolerance,
            sample_count,
            runtime_ms,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub passed: usize,
    pub failed: usize,
    pub max_residual_overall: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub suite: String,
    pub model: String,
    pub seed: u64,
    pub config_echo: serde_json::Value,
    pub checks: Vec<CheckRecord>,
    pub summary: Summary,
}

impl Report {
    /// Assemble a report: checks are sorted by id and summarized.
    pub fn new(
        suite: impl Into<String>,
        model: impl Into<String>,
        seed: u64,
        config_echo: serde_json::Value,
        mut checks: Vec<CheckRecord>,
    ) -> Self {
        checks.sort_by(|a, b| a.id.cmp(&b.id));
        let passed = checks
            .iter()
            .filter(|c| c.status == CheckStatus::Pass)
            .count();
        let failed = checks.len() - passed;
        let max_residual_overall = checks
            .iter()
            .map(|c| c.max_residual)
            .fold(0.0f64, f64::max);
        Report {
            suite: suite.into(),
            model: model.into(),
            seed,
            config_echo,
            checks,
            summary: Summary {
                passed,
                failed,
                max_residual_overall,
            },
        }
    }

    pub fn all_passed(&self) -> bool {
        self.summary.failed == 0
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// CSV with one row per check (header + records, sorted by id).
    pub fn to_csv_string(&self) -> String {
        let mut out =
            String::from("id,paper_ref,status,max_residual,tolerance,sample_count,runtime_ms\n");
        for c in &self.checks {
            let status = match c.status {
                CheckStatus::Pass => "pass",
                CheckStatus::Fail => "fail",
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                csv_field(&c.id),
                csv_field(&c.paper_ref),
                status,
                c.max_residual,
                c.tolerance,
                c.sample_count,
                c.runtime_ms
            ));
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Write contents atomically: temp file in the target directory, then rename.
/// A partially written file is never visible under the final name.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let tmp = match dir {
        Some(d) => d.join(format!(
            ".{}.tmp{}",
            path.file_name().unwrap_or_default().to_string_lossy(),
            std::process::id()
        )),
        None => std::path::PathBuf::from(format!(
            ".{}.tmp{}",
            path.to_string_lossy(),
            std::process::id()
        )),
    };
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}
