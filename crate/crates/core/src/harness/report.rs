//! Report rendering. Column order is fixed (scenario, support,
//! hypothesis, n, method, rate, ci_lo, ci_hi, reps, failures) and rates
//! print with three decimals, so identical inputs yield byte-identical
//! output.

use std::io::Write;
use std::str::FromStr;

use crate::error::{Error, Result};

use super::RejectionSummary;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
    JsonLines,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            "jsonl" | "json-lines" => Ok(ReportFormat::JsonLines),
            other => Err(Error::InvalidConfig(format!(
                "unknown report format '{other}' (expected csv, md, or jsonl)"
            ))),
        }
    }
}

const COLUMNS: [&str; 10] = [
    "scenario",
    "support",
    "hypothesis",
    "n",
    "method",
    "rate",
    "ci_lo",
    "ci_hi",
    "reps",
    "failures",
];

fn fields(s: &RejectionSummary) -> [String; 10] {
    [
        s.scenario.clone(),
        s.support.clone(),
        s.hypothesis.clone(),
        s.n.to_string(),
        s.method.clone(),
        format!("{:.3}", s.rejection_rate),
        format!("{:.3}", s.ci_lo),
        format!("{:.3}", s.ci_hi),
        s.repetitions.to_string(),
        s.failures.to_string(),
    ]
}

/// Writes the summaries in the requested format.
pub fn emit_report(
    summaries: &[RejectionSummary],
    format: ReportFormat,
    out: &mut dyn Write,
) -> Result<()> {
    if summaries.is_empty() {
        return Err(Error::InvalidData("no summaries to report".into()));
    }
    match format {
        ReportFormat::Csv => {
            writeln!(out, "{}", COLUMNS.join(","))?;
            for s in summaries {
                writeln!(out, "{}", fields(s).join(","))?;
            }
        }
        ReportFormat::Markdown => {
            writeln!(out, "| {} |", COLUMNS.join(" | "))?;
            writeln!(out, "|{}", "---|".repeat(COLUMNS.len()))?;
            for s in summaries {
                writeln!(out, "| {} |", fields(s).join(" | "))?;
            }
        }
        ReportFormat::JsonLines => {
            for s in summaries {
                let line = serde_json::to_string(s)
                    .map_err(|e| Error::InvalidData(format!("serialize summary: {e}")))?;
                writeln!(out, "{line}")?;
            }
        }
    }
    Ok(())
}
