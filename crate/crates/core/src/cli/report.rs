//! Text tables and the structured JSON report.

use std::fmt::Write as _;
use std::path::Path;

use super::experiment::{RunReport, Timings};
use crate::error::{Error, Result};
use crate::evaluation::MetricsReport;
use crate::vocab_embed::EmbeddingMode;

pub const REPORT_TEXT: &str = "report.txt";
pub const REPORT_JSON: &str = "report.json";
pub const TIMINGS_JSON: &str = "timings.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Structured,
}

fn mode_title(mode: EmbeddingMode) -> &'static str {
    match mode {
        EmbeddingMode::CorpusTrained => "Corpus-trained embedding",
        EmbeddingMode::PretrainedStatic => "Pretrained static embedding",
    }
}

/// One aligned table per embedding mode.
pub fn render_text(report: &RunReport) -> String {
    let mut out = String::new();
    let s = &report.dataset;
    let _ = writeln!(
        out,
        "Dataset: {} records ({} FR, {} NFR); {} repetition(s), master seed {}",
        s.total, s.fr, s.nfr, report.config.reps, report.config.seed
    );
    let headers: Vec<String> = MetricsReport::NAMES.iter().map(|n| format!("{n} (Std. Dev.)")).collect();
    for mode in &report.modes {
        let _ = writeln!(out, "\n{}", mode_title(mode.mode));
        let mut rows: Vec<Vec<String>> = vec![std::iter::once("Method".to_string()).chain(headers.iter().cloned()).collect()];
        for row in &mode.rows {
            let mut line = vec![row.name.clone()];
            match &row.cells {
                Some(cells) => line.extend(cells.iter().map(|c| c.render())),
                None => line.extend(std::iter::repeat("failed".to_string()).take(3)),
            }
            rows.push(line);
        }
        let widths: Vec<usize> = (0..4).map(|j| rows.iter().map(|r| r[j].len()).max().unwrap_or(0)).collect();
        for r in &rows {
            let cells: Vec<String> = r.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        for row in &mode.rows {
            let failed = row.runs.len() - row.completed;
            if failed > 0 {
                let _ = writeln!(
                    out,
                    "note: {} aggregated over {} of {} repetitions ({failed} failed)",
                    row.name,
                    row.completed,
                    row.runs.len()
                );
            }
        }
    }
    if !report.band_divergences.is_empty() {
        let _ = writeln!(out, "\nOutside expected F-score band (informational):");
        for d in &report.band_divergences {
            let _ = writeln!(out, "  {d}");
        }
    }
    if report.jobs_failed > 0 {
        let _ = writeln!(out, "\n{} of {} training jobs failed", report.jobs_failed, report.jobs_total);
    }
    out
}

pub fn render_json(report: &RunReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

pub fn parse_json(text: &str) -> Result<RunReport> {
    Ok(serde_json::from_str(text)?)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes the selected formats into `dir`; timings go to their own file.
pub fn render_report(report: &RunReport, timings: Option<&Timings>, dir: &Path, formats: &[ReportFormat]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for format in formats {
        match format {
            ReportFormat::Text => write(&dir.join(REPORT_TEXT), &render_text(report))?,
            ReportFormat::Structured => write(&dir.join(REPORT_JSON), &render_json(report)?)?,
        }
    }
    if let Some(t) = timings {
        write(&dir.join(TIMINGS_JSON), &(serde_json::to_string_pretty(t)? + "\n"))?;
    }
    Ok(())
}
