//! Rendering of results files: human-readable tables, machine-readable
//! records, per-condition plot-data files and cross-file comparisons.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use memprobe_core::stats::{DeltaCell, EffectReport, MeanSeries, PositionSeries, newcombe_delta};

use crate::error::CliError;
use crate::results::{Record, ResultsFile};

/// One row per position/x: tab-separated `x accuracy ci_low ci_high n`.
fn series_table(header_x: &str, rows: &[(String, f64, f64, f64, u64)]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{header_x}\taccuracy\tci_low\tci_high\tn");
    for (x, accuracy, low, high, n) in rows {
        let _ = writeln!(out, "{x}\t{accuracy:.6}\t{low:.6}\t{high:.6}\t{n}");
    }
    out
}

fn position_rows(series: &PositionSeries) -> Vec<(String, f64, f64, f64, u64)> {
    series
        .cells
        .iter()
        .map(|c| {
            (
                c.position.to_string(),
                c.accuracy,
                c.ci_low,
                c.ci_high,
                c.n_trials,
            )
        })
        .collect()
}

fn mean_rows(series: &MeanSeries) -> Vec<(String, f64, f64, f64, u64)> {
    series
        .points
        .iter()
        .map(|p| (p.x.to_string(), p.accuracy, p.ci_low, p.ci_high, p.n_trials))
        .collect()
}

fn effect_line(report: &EffectReport) -> String {
    let verdict = |present: bool, margin: f64| {
        format!(
            "{} (margin {margin:+.3})",
            if present { "present" } else { "absent" }
        )
    };
    format!(
        "{}: primacy {}, recency {} [edge span {}, middle {}..{}, z {}]",
        report.condition,
        verdict(report.primacy_present, report.primacy_margin),
        verdict(report.recency_present, report.recency_margin),
        report.edge_span,
        report.middle_lo,
        report.middle_hi,
        report.z,
    )
}

/// Human-readable report of one results file.
pub fn render_summary(results: &ResultsFile) -> String {
    let mut out = String::new();
    let m = &results.manifest;
    let _ = writeln!(out, "experiment: {}", m.experiment_id);
    let _ = writeln!(out, "backend:    {}", m.backend);
    let _ = writeln!(
        out,
        "top_k:      {}",
        if m.top_k == 0 {
            "full vocabulary".to_string()
        } else {
            m.top_k.to_string()
        }
    );
    let _ = writeln!(out, "lexicon:    {}", m.lexicon_fingerprint);
    let _ = writeln!(out, "nouns:      {}", m.noun_filter_fingerprint);
    if let Some(summary) = &results.summary {
        let _ = writeln!(
            out,
            "trials:     {} ({} correct, {} incorrect, {} errors)",
            summary.trial_count,
            summary.correct_count,
            summary.incorrect_count,
            summary.error_count
        );
    } else {
        let _ = writeln!(out, "trials:     partial file, no summary record");
    }
    for series in &results.positions {
        let _ = writeln!(out, "\n[{}] accuracy by position", series.condition);
        out.push_str(&series_table("position", &position_rows(series)));
    }
    for series in &results.means {
        let _ = writeln!(out, "\n[{}] mean accuracy", series.label);
        out.push_str(&series_table("x", &mean_rows(series)));
        for warning in &series.warnings {
            let _ = writeln!(out, "warning: {warning}");
        }
    }
    if !results.effects.is_empty() {
        let _ = writeln!(out, "\neffects:");
        for report in &results.effects {
            let _ = writeln!(out, "  {}", effect_line(report));
        }
    }
    for comparison in &results.comparisons {
        let _ = writeln!(
            out,
            "\n[{} vs {}] pooled delta {:+.4} [{:+.4}, {:+.4}]",
            comparison.condition_a,
            comparison.condition_b,
            comparison.pooled.delta,
            comparison.pooled.ci_low,
            comparison.pooled.ci_high
        );
        if !comparison.cells.is_empty() {
            out.push_str(&delta_table(&comparison.cells));
        }
    }
    out
}

fn delta_table(cells: &[DeltaCell]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "position\tdelta\tci_low\tci_high");
    for cell in cells {
        let _ = writeln!(
            out,
            "{}\t{:+.6}\t{:+.6}\t{:+.6}",
            cell.position, cell.delta, cell.ci_low, cell.ci_high
        );
    }
    out
}

/// Re-emits the aggregate records (everything but per-trial rows) as
/// line-delimited JSON.
pub fn render_records(results: &ResultsFile) -> Result<String, CliError> {
    let mut out = String::new();
    let mut push = |record: &Record| -> Result<(), CliError> {
        let line = serde_json::to_string(record)
            .map_err(|e| CliError::data(format!("encode record: {e}")))?;
        out.push_str(&line);
        out.push('\n');
        Ok(())
    };
    push(&Record::Manifest(results.manifest.clone()))?;
    for series in &results.positions {
        push(&Record::Positions(series.clone()))?;
    }
    for report in &results.effects {
        push(&Record::Effects(report.clone()))?;
    }
    for series in &results.means {
        push(&Record::Means(series.clone()))?;
    }
    for comparison in &results.comparisons {
        push(&Record::Comparison(comparison.clone()))?;
    }
    if let Some(summary) = results.summary {
        push(&Record::Summary(summary))?;
    }
    Ok(out)
}

fn safe_name(condition: &str) -> String {
    condition
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '-'
            }
        })
        .collect()
}

/// Writes one TSV per series into `dir`, ready for any plotting tool.
pub fn write_plot_data(results: &ResultsFile, dir: &Path) -> Result<Vec<String>, CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::data(format!("create {}: {e}", dir.display())))?;
    let mut written = Vec::new();
    let mut write = |name: String, content: String| -> Result<(), CliError> {
        let path = dir.join(&name);
        fs::write(&path, content)
            .map_err(|e| CliError::data(format!("write {}: {e}", path.display())))?;
        written.push(name);
        Ok(())
    };
    for series in &results.positions {
        write(
            format!("positions_{}.tsv", safe_name(&series.condition)),
            series_table("position", &position_rows(series)),
        )?;
    }
    for series in &results.means {
        write(
            format!("means_{}.tsv", safe_name(&series.label)),
            series_table("x", &mean_rows(series)),
        )?;
    }
    for comparison in &results.comparisons {
        if comparison.cells.is_empty() {
            continue;
        }
        write(
            format!(
                "delta_{}_vs_{}.tsv",
                safe_name(&comparison.condition_a),
                safe_name(&comparison.condition_b)
            ),
            delta_table(&comparison.cells),
        )?;
    }
    Ok(written)
}

/// Per-position deltas between the matching conditions of two results
/// files (this file minus the other), recomputed from the stored counts.
pub fn compare_files(a: &ResultsFile, b: &ResultsFile) -> Result<String, CliError> {
    let mut out = String::new();
    for series_a in &a.positions {
        let Some(series_b) = b
            .positions
            .iter()
            .find(|s| s.condition == series_a.condition)
        else {
            continue;
        };
        if series_a.cells.len() != series_b.cells.len() {
            return Err(CliError::data(format!(
                "condition {}: position counts differ ({} vs {})",
                series_a.condition,
                series_a.cells.len(),
                series_b.cells.len()
            )));
        }
        let _ = writeln!(
            out,
            "[{}] delta by position (this - other)",
            series_a.condition
        );
        let mut cells = Vec::new();
        for (ca, cb) in series_a.cells.iter().zip(&series_b.cells) {
            let (delta, ci_low, ci_high) = newcombe_delta(
                ca.n_correct,
                ca.n_trials,
                cb.n_correct,
                cb.n_trials,
                series_a.z,
            )?;
            cells.push(DeltaCell {
                position: ca.position,
                delta,
                ci_low,
                ci_high,
            });
        }
        out.push_str(&delta_table(&cells));
        out.push('\n');
    }
    for series_a in &a.means {
        let Some(series_b) = b.means.iter().find(|s| s.label == series_a.label) else {
            continue;
        };
        let _ = writeln!(out, "[{}] delta by x (this - other)", series_a.label);
        let _ = writeln!(out, "x\tdelta\tci_low\tci_high");
        for pa in &series_a.points {
            let Some(pb) = series_b.points.iter().find(|p| p.x == pa.x) else {
                continue;
            };
            let (delta, ci_low, ci_high) = newcombe_delta(
                pa.n_correct,
                pa.n_trials,
                pb.n_correct,
                pb.n_trials,
                series_a.z,
            )?;
            let _ = writeln!(out, "{}\t{delta:+.6}\t{ci_low:+.6}\t{ci_high:+.6}", pa.x);
        }
        out.push('\n');
    }
    if out.is_empty() {
        return Err(CliError::data(
            "the two results files share no conditions to compare",
        ));
    }
    Ok(out)
}
