//! CSV and plain-text rendering of evaluation reports.
//!
//! The text tables are deterministic given the records: fixed column order,
//! attack rows in first-appearance order, rates printed with two decimals
//! and latencies with one (stub runs render as 0.0 regardless of noise).

use std::path::Path;

use crate::error::Result;
use crate::eval::{AsrReport, CapabilityReport, JudgeKind};
use crate::util::write_atomic;

fn judge_name(judge: JudgeKind) -> &'static str {
    match judge {
        JudgeKind::Substring => "substring",
        JudgeKind::Classifier => "classifier",
    }
}

fn fmt_asr(asr: Option<f64>) -> String {
    match asr {
        Some(value) => format!("{value:.2}"),
        None => "n/a".to_string(),
    }
}

/// Render the per-attack table as text.
pub fn render_asr_table(report: &AsrReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("judge: {}\n", judge_name(report.judge)));
    out.push_str(&format!(
        "{:<20} {:>5} {:>8} {:>10} {:>6} {:>12}\n",
        "attack", "n", "harmful", "judge_err", "asr", "mean_lat_s"
    ));
    for row in &report.rows {
        out.push_str(&format!(
            "{:<20} {:>5} {:>8} {:>10} {:>6} {:>12.1}\n",
            row.attack,
            row.n,
            row.harmful,
            row.judge_errors,
            fmt_asr(row.asr),
            row.mean_latency_seconds,
        ));
    }
    out
}

/// Render the per-attack table as CSV (full-precision latency).
pub fn render_asr_csv(report: &AsrReport) -> String {
    let mut out = String::from("attack,n,harmful,judge_errors,asr,mean_latency_seconds\n");
    for row in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.attack,
            row.n,
            row.harmful,
            row.judge_errors,
            fmt_asr(row.asr),
            row.mean_latency_seconds,
        ));
    }
    out
}

pub fn render_capability_table(reports: &[CapabilityReport]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<20} {:>6} {:>7} {:>8} {:>9}\n",
        "benchmark", "total", "scored", "correct", "accuracy"
    ));
    for report in reports {
        out.push_str(&format!(
            "{:<20} {:>6} {:>7} {:>8} {:>9}\n",
            report.benchmark,
            report.total,
            report.scored,
            report.correct,
            fmt_asr(report.accuracy),
        ));
    }
    out
}

pub fn render_capability_csv(reports: &[CapabilityReport]) -> String {
    let mut out = String::from("benchmark,total,scored,correct,accuracy\n");
    for report in reports {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            report.benchmark,
            report.total,
            report.scored,
            report.correct,
            fmt_asr(report.accuracy),
        ));
    }
    out
}

pub fn write_asr_reports(report: &AsrReport, csv_path: &Path, table_path: &Path) -> Result<()> {
    write_atomic(csv_path, render_asr_csv(report).as_bytes())?;
    write_atomic(table_path, render_asr_table(report).as_bytes())
}

pub fn write_capability_reports(
    reports: &[CapabilityReport],
    csv_path: &Path,
    table_path: &Path,
) -> Result<()> {
    write_atomic(csv_path, render_capability_csv(reports).as_bytes())?;
    write_atomic(table_path, render_capability_table(reports).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::AsrRow;

    #[test]
    fn table_is_deterministic_and_ordered() {
        let report = AsrReport {
            judge: JudgeKind::Substring,
            rows: vec![
                AsrRow {
                    attack: "none".into(),
                    n: 5,
                    harmful: 0,
                    asr: Some(0.0),
                    judge_errors: 0,
                    mean_latency_seconds: 0.0004,
                },
                AsrRow {
                    attack: "slang".into(),
                    n: 5,
                    harmful: 5,
                    asr: Some(1.0),
                    judge_errors: 0,
                    mean_latency_seconds: 0.02,
                },
            ],
        };
        let table = render_asr_table(&report);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[2].starts_with("none"));
        assert!(lines[2].contains("0.00"));
        assert!(lines[3].starts_with("slang"));
        assert!(lines[3].contains("1.00"));
        assert!(lines[2].trim_end().ends_with("0.0"), "stub latency renders as 0.0");
        assert_eq!(table, render_asr_table(&report));
    }
}
