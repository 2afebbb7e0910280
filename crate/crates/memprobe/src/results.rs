//! The results file: line-delimited JSON records under a header manifest.
//! Append-only, diff-able, and resumable -- a run interrupted at any
//! record boundary picks up where it left off and produces the same file
//! an uninterrupted run would have written.
//!
//! Record order: one `manifest` line, one `trial` line per trial in
//! schedule order, then aggregate records, then one `summary` line. A
//! file without a summary is a partial run.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use memprobe_core::scoring::{Judgment, JudgmentOutcome};
use memprobe_core::stats::{DeltaCell, EffectReport, MeanSeries, PositionSeries};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable pinning the manifest timestamp, for byte-exact
/// reproducible pipelines.
pub const TIMESTAMP_ENV: &str = "MEMPROBE_TIMESTAMP";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub experiment_id: String,
    /// Resolved run parameters (experiment spec, scoring mode).
    pub config: serde_json::Value,
    pub lexicon_fingerprint: String,
    pub noun_filter_fingerprint: String,
    /// Backend label, credentials redacted.
    pub backend: String,
    pub top_k: usize,
    pub timestamp: String,
    pub harness_version: String,
    /// Scheduled trial count; the summary holds the final tallies.
    pub trial_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: String,
    pub condition: String,
    pub probe_position: u8,
    pub list_length: u8,
    pub target: String,
    pub target_token: String,
    pub first_token_mode: bool,
    /// None when the trial errored; see `error`.
    pub correct: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top_noun: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_prob: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_rank: Option<u32>,
}

impl TrialRecord {
    pub fn from_judgment(
        judgment: &Judgment,
        condition: &str,
        probe_position: u8,
        list_length: u8,
        target: &str,
        first_token_mode: bool,
    ) -> TrialRecord {
        let mut record = TrialRecord {
            trial_id: judgment.trial_id.clone(),
            condition: condition.to_string(),
            probe_position,
            list_length,
            target: target.to_string(),
            target_token: judgment.target_token.clone(),
            first_token_mode,
            correct: None,
            error: None,
            top_noun: None,
            target_prob: None,
            target_rank: None,
        };
        match &judgment.outcome {
            JudgmentOutcome::Scored {
                correct,
                top_noun,
                target_prob,
                target_rank_among_nouns,
            } => {
                record.correct = Some(*correct);
                record.top_noun = Some(top_noun.clone());
                record.target_prob = *target_prob;
                record.target_rank = *target_rank_among_nouns;
            }
            JudgmentOutcome::Errored { code } => {
                record.error = Some(code.label().to_string());
            }
        }
        record
    }
}

/// Pooled accuracy difference between two conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledDelta {
    pub delta: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub condition_a: String,
    pub condition_b: String,
    /// Per-position deltas (empty for pooled-only comparisons).
    pub cells: Vec<DeltaCell>,
    pub pooled: PooledDelta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub trial_count: u64,
    pub correct_count: u64,
    pub incorrect_count: u64,
    pub error_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Record {
    Manifest(RunManifest),
    Trial(TrialRecord),
    Positions(PositionSeries),
    Effects(EffectReport),
    Means(MeanSeries),
    Comparison(ComparisonRecord),
    Summary(SummaryRecord),
}

/// A fully parsed results file.
#[derive(Debug, Clone)]
pub struct ResultsFile {
    pub manifest: RunManifest,
    pub trials: Vec<TrialRecord>,
    pub positions: Vec<PositionSeries>,
    pub effects: Vec<EffectReport>,
    pub means: Vec<MeanSeries>,
    pub comparisons: Vec<ComparisonRecord>,
    pub summary: Option<SummaryRecord>,
}

impl ResultsFile {
    pub fn is_complete(&self) -> bool {
        self.summary.is_some()
    }
}

pub fn now_timestamp() -> String {
    if let Ok(pinned) = std::env::var(TIMESTAMP_ENV) {
        return pinned;
    }
    let unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("unix:{unix}")
}

fn encode(record: &Record) -> Result<String, CliError> {
    serde_json::to_string(record).map_err(|e| CliError::data(format!("encode record: {e}")))
}

/// Streams records to disk. One writer owns the file; trials must arrive
/// in their final order.
pub struct ResultsWriter {
    writer: BufWriter<File>,
}

impl ResultsWriter {
    /// Creates (truncates) the file and writes the manifest header.
    pub fn create(path: &Path, manifest: &RunManifest) -> Result<ResultsWriter, CliError> {
        let file = File::create(path)
            .map_err(|e| CliError::data(format!("create {}: {e}", path.display())))?;
        let mut writer = ResultsWriter {
            writer: BufWriter::new(file),
        };
        writer.append(&Record::Manifest(manifest.clone()))?;
        Ok(writer)
    }

    /// Reopens a partial file for appending, truncating any torn trailing
    /// bytes first.
    pub fn append_to(path: &Path, valid_len: u64) -> Result<ResultsWriter, CliError> {
        let file = OpenOptions::new()
            .write(true)
            .open(path)
            .map_err(|e| CliError::data(format!("open {}: {e}", path.display())))?;
        file.set_len(valid_len)
            .map_err(|e| CliError::data(format!("truncate {}: {e}", path.display())))?;
        let mut file = file;
        use std::io::Seek;
        file.seek(std::io::SeekFrom::End(0))
            .map_err(|e| CliError::data(format!("seek {}: {e}", path.display())))?;
        Ok(ResultsWriter {
            writer: BufWriter::new(file),
        })
    }

    pub fn append(&mut self, record: &Record) -> Result<(), CliError> {
        let line = encode(record)?;
        self.writer
            .write_all(line.as_bytes())
            .and_then(|_| self.writer.write_all(b"\n"))
            .map_err(|e| CliError::data(format!("write results: {e}")))
    }

    pub fn flush(&mut self) -> Result<(), CliError> {
        self.writer
            .flush()
            .map_err(|e| CliError::data(format!("flush results: {e}")))
    }
}

/// What a resume scan found in an existing results file.
pub struct ResumeState {
    pub manifest: RunManifest,
    pub done: BTreeMap<String, TrialRecord>,
    /// Byte length of the valid prefix (manifest + complete trial lines).
    pub valid_len: u64,
    pub complete: bool,
}

/// Scans a partial results file: the manifest, every complete trial
/// record, and the byte offset where a torn trailing line (if any)
/// starts. Aggregate records mark the file complete.
pub fn scan_for_resume(path: &Path) -> Result<ResumeState, CliError> {
    let file =
        File::open(path).map_err(|e| CliError::data(format!("open {}: {e}", path.display())))?;
    let mut reader = BufReader::new(file);
    let mut line = String::new();
    let mut offset: u64 = 0;
    let mut manifest: Option<RunManifest> = None;
    let mut done = BTreeMap::new();
    let mut valid_len = 0u64;
    let mut complete = false;
    loop {
        line.clear();
        let read = reader
            .read_line(&mut line)
            .map_err(|e| CliError::data(format!("read {}: {e}", path.display())))?;
        if read == 0 {
            break;
        }
        offset += read as u64;
        if !line.ends_with('\n') {
            break; // torn tail from an interrupted write
        }
        let record: Record = match serde_json::from_str(line.trim_end()) {
            Ok(record) => record,
            Err(_) => break,
        };
        match record {
            Record::Manifest(m) => {
                if manifest.is_some() {
                    return Err(CliError::data(format!(
                        "{}: more than one manifest",
                        path.display()
                    )));
                }
                manifest = Some(m);
                valid_len = offset;
            }
            Record::Trial(trial) => {
                if manifest.is_none() {
                    return Err(CliError::data(format!(
                        "{}: trial record before manifest",
                        path.display()
                    )));
                }
                done.insert(trial.trial_id.clone(), trial);
                valid_len = offset;
            }
            Record::Summary(_) => {
                complete = true;
                valid_len = offset;
            }
            _ => {
                valid_len = offset;
            }
        }
    }
    let manifest = manifest
        .ok_or_else(|| CliError::data(format!("{}: no manifest record", path.display())))?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(CliError::data(format!(
            "{}: schema version {} (this build reads {SCHEMA_VERSION})",
            path.display(),
            manifest.schema_version
        )));
    }
    Ok(ResumeState {
        manifest,
        done,
        valid_len,
        complete,
    })
}

/// Parses a complete results file.
pub fn read_results(path: &Path) -> Result<ResultsFile, CliError> {
    let file =
        File::open(path).map_err(|e| CliError::data(format!("open {}: {e}", path.display())))?;
    let reader = BufReader::new(file);
    let mut manifest = None;
    let mut trials = Vec::new();
    let mut positions = Vec::new();
    let mut effects = Vec::new();
    let mut means = Vec::new();
    let mut comparisons = Vec::new();
    let mut summary = None;
    for (number, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CliError::data(format!("read {}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line)
            .map_err(|e| CliError::data(format!("{} line {}: {e}", path.display(), number + 1)))?;
        match record {
            Record::Manifest(m) => manifest = Some(m),
            Record::Trial(t) => trials.push(t),
            Record::Positions(p) => positions.push(p),
            Record::Effects(e) => effects.push(e),
            Record::Means(m) => means.push(m),
            Record::Comparison(c) => comparisons.push(c),
            Record::Summary(s) => summary = Some(s),
        }
    }
    let manifest = manifest
        .ok_or_else(|| CliError::data(format!("{}: no manifest record", path.display())))?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(CliError::data(format!(
            "{}: schema version {} (this build reads {SCHEMA_VERSION})",
            path.display(),
            manifest.schema_version
        )));
    }
    Ok(ResultsFile {
        manifest,
        trials,
        positions,
        effects,
        means,
        comparisons,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_manifest() -> RunManifest {
        RunManifest {
            schema_version: SCHEMA_VERSION,
            experiment_id: "test".into(),
            config: serde_json::json!({"k": 1}),
            lexicon_fingerprint: "lex".into(),
            noun_filter_fingerprint: "nf".into(),
            backend: "kernel".into(),
            top_k: 50,
            timestamp: "unix:0".into(),
            harness_version: "0.0.0".into(),
            trial_count: 2,
        }
    }

    fn test_trial(id: &str, correct: bool) -> TrialRecord {
        TrialRecord {
            trial_id: id.into(),
            condition: "c".into(),
            probe_position: 1,
            list_length: 1,
            target: "Dublin".into(),
            target_token: " Dublin".into(),
            first_token_mode: false,
            correct: Some(correct),
            error: None,
            top_noun: Some(" Dublin".into()),
            target_prob: Some(0.5),
            target_rank: Some(1),
        }
    }

    #[test]
    fn write_read_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.jsonl");
        let mut writer = ResultsWriter::create(&path, &test_manifest()).unwrap();
        writer
            .append(&Record::Trial(test_trial("a", true)))
            .unwrap();
        writer
            .append(&Record::Trial(test_trial("b", false)))
            .unwrap();
        writer
            .append(&Record::Summary(SummaryRecord {
                trial_count: 2,
                correct_count: 1,
                incorrect_count: 1,
                error_count: 0,
            }))
            .unwrap();
        writer.flush().unwrap();

        let parsed = read_results(&path).unwrap();
        assert_eq!(parsed.manifest, test_manifest());
        assert_eq!(parsed.trials.len(), 2);
        assert!(parsed.is_complete());
    }

    #[test]
    fn resume_scan_handles_torn_tail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.jsonl");
        let mut writer = ResultsWriter::create(&path, &test_manifest()).unwrap();
        writer
            .append(&Record::Trial(test_trial("a", true)))
            .unwrap();
        writer.flush().unwrap();
        let clean_len = std::fs::metadata(&path).unwrap().len();
        // Simulate an interrupted write.
        use std::io::Write as _;
        let mut file = OpenOptions::new().append(true).open(&path).unwrap();
        file.write_all(b"{\"type\":\"trial\",\"trial_id\":\"b\"")
            .unwrap();
        drop(file);

        let state = scan_for_resume(&path).unwrap();
        assert_eq!(state.done.len(), 1);
        assert!(state.done.contains_key("a"));
        assert_eq!(state.valid_len, clean_len);
        assert!(!state.complete);
    }

    #[test]
    fn schema_version_mismatch_is_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.jsonl");
        let mut manifest = test_manifest();
        manifest.schema_version = 999;
        let mut writer = ResultsWriter::create(&path, &manifest).unwrap();
        writer.flush().unwrap();
        let err = read_results(&path).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().contains("schema version 999"));
    }

    #[test]
    fn timestamp_env_override() {
        // Serialized via a lock-free convention: tests that touch env
        // vars run in this module only.
        unsafe { std::env::set_var(TIMESTAMP_ENV, "unix:12345") };
        assert_eq!(now_timestamp(), "unix:12345");
        unsafe { std::env::remove_var(TIMESTAMP_ENV) };
        assert!(now_timestamp().starts_with("unix:"));
    }
}
