//! Orchestrates a run: schedule generation, prompt assembly, parallel
//! backend querying, scoring, in-order result streaming and aggregation.
//!
//! Concurrency contract: workers pull jobs from a shared cursor and send
//! finished records over a channel; the single writer holds records back
//! until their turn, so the results file always lists trials in schedule
//! order no matter how many workers raced. Aggregation happens once, over
//! the records sorted by trial id, so output never depends on timing.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, mpsc};
use std::thread;

use serde::Serialize;

use memprobe_core::backend::{Backend, BackendError};
use memprobe_core::design::{ExperimentSpec, Family, Schedule, make_schedule};
use memprobe_core::lexicon::Lexicon;
use memprobe_core::prompt::assemble_prompt;
use memprobe_core::scoring::{Judgment, NounFilter, judge, resolve_target_token};
use memprobe_core::stats::{
    GroupedResult, TrialResult, aggregate_by_position, aggregate_decay, compare_conditions,
    detect_effects, newcombe_delta,
};

use crate::error::CliError;
use crate::results::{
    ComparisonRecord, PooledDelta, Record, ResultsWriter, RunManifest, SCHEMA_VERSION,
    SummaryRecord, TrialRecord, now_timestamp, read_results, scan_for_resume,
};

pub const DEFAULT_TOP_K: usize = 50;
pub const DEFAULT_PARALLEL: usize = 4;
pub const DEFAULT_Z: f64 = 1.96;

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub top_k: usize,
    pub parallel: usize,
    pub max_errors: u64,
    pub out: PathBuf,
    pub resume: bool,
    pub no_noun_filter: bool,
    pub extra_nouns: Option<PathBuf>,
    pub export_prompts: Option<PathBuf>,
    pub export_schedule: Option<PathBuf>,
    pub quiet: bool,
}

impl Default for RunOptions {
    fn default() -> RunOptions {
        RunOptions {
            top_k: DEFAULT_TOP_K,
            parallel: DEFAULT_PARALLEL,
            max_errors: 0,
            out: PathBuf::from("memprobe-results.jsonl"),
            resume: false,
            no_noun_filter: false,
            extra_nouns: None,
            export_prompts: None,
            export_schedule: None,
            quiet: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub results_path: PathBuf,
    pub summary: SummaryRecord,
    pub effects: Vec<memprobe_core::stats::EffectReport>,
    /// Trials whose distribution held no noun at the requested depth;
    /// excluded from accuracy and a sign that top_k is too small.
    pub noun_not_in_top_k: u64,
    /// True when the error budget was exceeded.
    pub over_error_budget: bool,
}

#[derive(Debug, Clone)]
struct Job {
    index: usize,
    trial_id: String,
    condition: String,
    probe_position: u8,
    list_length: u8,
    target: String,
    target_token: String,
    first_token_mode: bool,
    prompt: String,
}

#[derive(Serialize)]
struct PromptExportRecord<'a> {
    trial_id: &'a str,
    prompt: &'a str,
    target: &'a str,
}

fn export_jsonl<T: Serialize>(path: &Path, rows: impl Iterator<Item = T>) -> Result<(), CliError> {
    let file = File::create(path)
        .map_err(|e| CliError::data(format!("create {}: {e}", path.display())))?;
    let mut writer = BufWriter::new(file);
    for row in rows {
        let line = serde_json::to_string(&row)
            .map_err(|e| CliError::data(format!("encode export: {e}")))?;
        writer
            .write_all(line.as_bytes())
            .and_then(|_| writer.write_all(b"\n"))
            .map_err(|e| CliError::data(format!("write {}: {e}", path.display())))?;
    }
    writer
        .flush()
        .map_err(|e| CliError::data(format!("flush {}: {e}", path.display())))
}

/// Builds the noun filter for the run, using the backend's tokenizer.
pub fn build_filter(
    lexicon: &Lexicon,
    backend: &dyn Backend,
    no_noun_filter: bool,
    extra_nouns: Option<&Path>,
) -> Result<NounFilter, CliError> {
    if no_noun_filter {
        return Ok(NounFilter::unrestricted());
    }
    let extra = match extra_nouns {
        Some(path) => Some(
            std::fs::read_to_string(path)
                .map_err(|e| CliError::data(format!("read {}: {e}", path.display())))?,
        ),
        None => None,
    };
    let mut tokenize_failure: Option<BackendError> = None;
    let filter = NounFilter::build(
        lexicon,
        |text| {
            // Once the backend hard-fails, stop calling it; the failure
            // aborts the run below.
            if tokenize_failure.is_some() {
                return Vec::new();
            }
            match backend.tokenize(text) {
                Ok(tokens) => tokens,
                // A word missing from a scripted tokenizer table just
                // stays off the filter; anything else kills the run.
                Err(BackendError::TokenizeMiss { .. }) => Vec::new(),
                Err(err) => {
                    tokenize_failure = Some(err);
                    Vec::new()
                }
            }
        },
        extra.as_deref(),
    );
    if let Some(err) = tokenize_failure {
        return Err(err.into());
    }
    Ok(filter?)
}

fn resolve_targets(
    schedule: &Schedule,
    backend: &dyn Backend,
) -> Result<BTreeMap<String, (String, bool)>, CliError> {
    let mut unique: BTreeSet<&str> = BTreeSet::new();
    for trial in &schedule.trials {
        unique.insert(trial.target());
    }
    let mut resolved = BTreeMap::new();
    for target in unique {
        let mut tokenize_failure: Option<BackendError> = None;
        let token = resolve_target_token(target, |text| match backend.tokenize(text) {
            Ok(tokens) => tokens,
            Err(err) => {
                if tokenize_failure.is_none() {
                    tokenize_failure = Some(err);
                }
                Vec::new()
            }
        });
        if let Some(err) = tokenize_failure {
            return Err(err.into());
        }
        resolved.insert(target.to_string(), token?);
    }
    Ok(resolved)
}

/// Backend failures that indicate a broken setup rather than a flaky
/// trial; these abort the run instead of being recorded.
fn is_fatal(err: &BackendError) -> bool {
    matches!(
        err,
        BackendError::FixtureMiss { .. }
            | BackendError::KernelParse { .. }
            | BackendError::InvalidKernelConfig { .. }
            | BackendError::InvalidTopK
            | BackendError::EmptyPrompt
    )
}

fn execute_job(
    job: &Job,
    backend: &dyn Backend,
    top_k: usize,
    filter: &NounFilter,
) -> Result<TrialRecord, CliError> {
    let judgment = match backend.next_token_distribution(&job.prompt, top_k) {
        Ok(dist) => judge(&job.trial_id, &dist, &job.target_token, filter),
        Err(err) if is_fatal(&err) => return Err(err.into()),
        Err(_) => Judgment::backend_error(&job.trial_id, &job.target_token),
    };
    Ok(TrialRecord::from_judgment(
        &judgment,
        &job.condition,
        job.probe_position,
        job.list_length,
        &job.target,
        job.first_token_mode,
    ))
}

fn run_parallel(
    backend: Arc<dyn Backend + Send + Sync>,
    jobs: Arc<Vec<Job>>,
    pending: Vec<usize>,
    opts: &RunOptions,
    filter: &NounFilter,
    writer: &mut ResultsWriter,
) -> Result<BTreeMap<String, TrialRecord>, CliError> {
    let top_k = opts.top_k;
    let quiet = opts.quiet;
    let pending = Arc::new(pending);
    let cursor = Arc::new(AtomicUsize::new(0));
    let stop = Arc::new(AtomicBool::new(false));
    let (tx, rx) = mpsc::channel::<(usize, Result<TrialRecord, CliError>)>();
    let workers: Vec<_> = (0..opts.parallel.max(1))
        .map(|_| {
            let backend = Arc::clone(&backend);
            let jobs = Arc::clone(&jobs);
            let pending = Arc::clone(&pending);
            let cursor = Arc::clone(&cursor);
            let stop = Arc::clone(&stop);
            let filter = filter.clone();
            let tx = tx.clone();
            thread::spawn(move || {
                loop {
                    if stop.load(Ordering::Relaxed) {
                        break;
                    }
                    let slot = cursor.fetch_add(1, Ordering::Relaxed);
                    if slot >= pending.len() {
                        break;
                    }
                    let job = &jobs[pending[slot]];
                    let result = execute_job(job, &*backend, top_k, &filter);
                    if tx.send((slot, result)).is_err() {
                        break;
                    }
                }
            })
        })
        .collect();
    drop(tx);

    let mut holdback: BTreeMap<usize, TrialRecord> = BTreeMap::new();
    let mut next_slot = 0usize;
    let mut finished: BTreeMap<String, TrialRecord> = BTreeMap::new();
    let mut fatal: Option<CliError> = None;
    let mut received = 0usize;
    for (slot, result) in rx {
        match result {
            Ok(record) => {
                received += 1;
                if !quiet && received.is_multiple_of(500) {
                    eprintln!("memprobe: {received}/{} trials", pending.len());
                }
                finished.insert(record.trial_id.clone(), record.clone());
                holdback.insert(slot, record);
                while let Some(record) = holdback.remove(&next_slot) {
                    writer.append(&Record::Trial(record))?;
                    next_slot += 1;
                }
            }
            Err(err) => {
                stop.store(true, Ordering::Relaxed);
                if fatal.is_none() {
                    fatal = Some(err);
                }
            }
        }
    }
    for worker in workers {
        if worker.join().is_err() {
            stop.store(true, Ordering::Relaxed);
            if fatal.is_none() {
                fatal = Some(CliError::backend("worker thread panicked"));
            }
        }
    }
    writer.flush()?;
    if let Some(err) = fatal {
        return Err(err);
    }
    Ok(finished)
}

fn to_trial_results(records: &[TrialRecord]) -> Vec<TrialResult> {
    records
        .iter()
        .map(|r| TrialResult {
            trial_id: r.trial_id.clone(),
            condition: r.condition.clone(),
            probe_position: r.probe_position,
            list_length: r.list_length,
            correct: r.correct,
        })
        .collect()
}

fn pooled_counts(results: &[TrialResult], condition: &str) -> (u64, u64) {
    let mut k = 0;
    let mut n = 0;
    for r in results.iter().filter(|r| r.condition == condition) {
        if let Some(correct) = r.correct {
            n += 1;
            if correct {
                k += 1;
            }
        }
    }
    (k, n)
}

fn pooled_comparison(
    results: &[TrialResult],
    condition_a: &str,
    condition_b: &str,
    z: f64,
) -> Result<PooledDelta, CliError> {
    let (ka, na) = pooled_counts(results, condition_a);
    let (kb, nb) = pooled_counts(results, condition_b);
    let (delta, ci_low, ci_high) = newcombe_delta(ka, na, kb, nb, z)?;
    Ok(PooledDelta {
        delta,
        ci_low,
        ci_high,
    })
}

/// Family-specific aggregation over the sorted trial records.
fn aggregate(
    spec: &ExperimentSpec,
    records: &[TrialRecord],
    cell_meta: &BTreeMap<String, BTreeMap<String, String>>,
    z: f64,
) -> Result<(Vec<Record>, Vec<memprobe_core::stats::EffectReport>), CliError> {
    let results = to_trial_results(records);
    let conditions: BTreeSet<String> = results.iter().map(|r| r.condition.clone()).collect();
    let mut out = Vec::new();
    let mut effects = Vec::new();
    let push_positions = |out: &mut Vec<Record>,
                          effects: &mut Vec<memprobe_core::stats::EffectReport>,
                          condition: &str|
     -> Result<(), CliError> {
        let series = aggregate_by_position(&results, condition, z)?;
        // Lists shorter than three edge spans have no middle band to
        // compare against; report the series without a verdict.
        match detect_effects(&series, 2, z) {
            Ok(report) => {
                out.push(Record::Positions(series));
                out.push(Record::Effects(report.clone()));
                effects.push(report);
            }
            Err(
                memprobe_core::stats::StatsError::ListTooShort { .. }
                | memprobe_core::stats::StatsError::NoScoredTrials { .. },
            ) => {
                out.push(Record::Positions(series));
            }
            Err(err) => return Err(err.into()),
        }
        Ok(())
    };
    match spec.family {
        Family::SerialPosition => {
            for condition in &conditions {
                push_positions(&mut out, &mut effects, condition)?;
            }
        }
        Family::Elaborations => {
            for condition in &conditions {
                push_positions(&mut out, &mut effects, condition)?;
            }
            let elaborated = aggregate_by_position(&results, "elaborated", z)?;
            let baseline = aggregate_by_position(&results, "baseline", z)?;
            let cells = compare_conditions(&elaborated, &baseline)?;
            let pooled = pooled_comparison(&results, "elaborated", "baseline", z)?;
            out.push(Record::Comparison(ComparisonRecord {
                condition_a: "elaborated".into(),
                condition_b: "baseline".into(),
                cells,
                pooled,
            }));
        }
        Family::Decay | Family::FormationTime => {
            let grouped = group_by_meta(&results, cell_meta, "hd")?;
            let series = aggregate_decay(&grouped, spec.id.as_str(), z)?;
            out.push(Record::Means(series));
        }
        Family::Interference => {
            for condition in &conditions {
                push_positions(&mut out, &mut effects, condition)?;
            }
            for condition in &conditions {
                if condition == "hd-baseline" {
                    continue;
                }
                let sandwich = aggregate_by_position(&results, condition, z)?;
                let baseline = aggregate_by_position(&results, "hd-baseline", z)?;
                let cells = compare_conditions(&sandwich, &baseline)?;
                let pooled = pooled_comparison(&results, condition, "hd-baseline", z)?;
                out.push(Record::Comparison(ComparisonRecord {
                    condition_a: condition.clone(),
                    condition_b: "hd-baseline".into(),
                    cells,
                    pooled,
                }));
            }
        }
        Family::Repetitions => {
            // Condition labels are "<placement>-lenNN"; fold each
            // placement into a mean-accuracy-per-length series.
            let mut placements: BTreeMap<String, Vec<GroupedResult>> = BTreeMap::new();
            for result in &results {
                let Some((placement, _)) = result.condition.rsplit_once("-len") else {
                    continue;
                };
                placements
                    .entry(placement.to_string())
                    .or_default()
                    .push(GroupedResult {
                        x: result.list_length as u32,
                        correct: result.correct,
                    });
            }
            for (placement, grouped) in &placements {
                out.push(Record::Means(aggregate_decay(grouped, placement, z)?));
            }
            for (a, b) in [
                ("separated", "adjacent"),
                ("separated-permuted", "separated"),
                ("separated", "padding"),
            ] {
                if !placements.contains_key(a) || !placements.contains_key(b) {
                    continue;
                }
                let pool = |placement: &str| {
                    let mut k = 0;
                    let mut n = 0;
                    for r in &placements[placement] {
                        if let Some(correct) = r.correct {
                            n += 1;
                            if correct {
                                k += 1;
                            }
                        }
                    }
                    (k, n)
                };
                let (ka, na) = pool(a);
                let (kb, nb) = pool(b);
                let (delta, ci_low, ci_high) = newcombe_delta(ka, na, kb, nb, z)?;
                out.push(Record::Comparison(ComparisonRecord {
                    condition_a: a.into(),
                    condition_b: b.into(),
                    cells: Vec::new(),
                    pooled: PooledDelta {
                        delta,
                        ci_low,
                        ci_high,
                    },
                }));
            }
        }
    }
    Ok((out, effects))
}

fn group_by_meta(
    results: &[TrialResult],
    cell_meta: &BTreeMap<String, BTreeMap<String, String>>,
    key: &str,
) -> Result<Vec<GroupedResult>, CliError> {
    results
        .iter()
        .map(|result| {
            let x = cell_meta
                .get(&result.condition)
                .and_then(|meta| meta.get(key))
                .and_then(|value| value.parse::<u32>().ok())
                .ok_or_else(|| {
                    CliError::data(format!(
                        "condition {} has no {key} annotation",
                        result.condition
                    ))
                })?;
            Ok(GroupedResult {
                x,
                correct: result.correct,
            })
        })
        .collect()
}

/// Runs one experiment end to end and writes the results file.
pub fn run_experiment(
    spec: &ExperimentSpec,
    lexicon: &Lexicon,
    backend: Arc<dyn Backend + Send + Sync>,
    opts: &RunOptions,
) -> Result<RunOutcome, CliError> {
    let schedule = make_schedule(spec, lexicon)?;
    if let Some(path) = &opts.export_schedule {
        export_jsonl(path, schedule.trials.iter())?;
    }

    let filter = build_filter(
        lexicon,
        &*backend,
        opts.no_noun_filter,
        opts.extra_nouns.as_deref(),
    )?;
    let targets = resolve_targets(&schedule, &*backend)?;

    let mut cell_meta: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
    let mut jobs = Vec::with_capacity(schedule.trials.len());
    for (index, trial) in schedule.trials.iter().enumerate() {
        cell_meta
            .entry(trial.condition().to_string())
            .or_insert_with(|| trial.annotations.clone());
        let prompt = assemble_prompt(trial, lexicon)?;
        let (target_token, first_token_mode) = targets[trial.target()].clone();
        jobs.push(Job {
            index,
            trial_id: prompt.trial_id.clone(),
            condition: trial.condition().to_string(),
            probe_position: trial.probe_position,
            list_length: trial.list_length,
            target: prompt.target.clone(),
            target_token,
            first_token_mode,
            prompt: prompt.text,
        });
    }
    if let Some(path) = &opts.export_prompts {
        export_jsonl(
            path,
            jobs.iter().map(|job| PromptExportRecord {
                trial_id: &job.trial_id,
                prompt: &job.prompt,
                target: &job.target,
            }),
        )?;
    }

    let manifest = RunManifest {
        schema_version: SCHEMA_VERSION,
        experiment_id: spec.id.clone(),
        config: serde_json::json!({
            "experiment": spec,
            "no_noun_filter": opts.no_noun_filter,
        }),
        lexicon_fingerprint: schedule.lexicon_fingerprint.clone(),
        noun_filter_fingerprint: filter.fingerprint(),
        backend: backend.describe(),
        top_k: opts.top_k,
        timestamp: now_timestamp(),
        harness_version: env!("CARGO_PKG_VERSION").to_string(),
        trial_count: jobs.len() as u64,
    };

    let (mut writer, done) = if opts.resume && opts.out.exists() {
        let state = scan_for_resume(&opts.out)?;
        if state.complete {
            let existing = read_results(&opts.out)?;
            let summary = existing.summary.expect("complete file has a summary");
            if !opts.quiet {
                eprintln!("memprobe: {} already complete", opts.out.display());
            }
            return Ok(RunOutcome {
                results_path: opts.out.clone(),
                summary,
                effects: existing.effects,
                noun_not_in_top_k: count_noun_misses(&existing.trials),
                over_error_budget: summary.error_count > opts.max_errors,
            });
        }
        verify_resume_manifest(&state.manifest, &manifest)?;
        (
            ResultsWriter::append_to(&opts.out, state.valid_len)?,
            state.done,
        )
    } else {
        (
            ResultsWriter::create(&opts.out, &manifest)?,
            BTreeMap::new(),
        )
    };

    let pending: Vec<usize> = jobs
        .iter()
        .filter(|job| !done.contains_key(&job.trial_id))
        .map(|job| job.index)
        .collect();
    let jobs = Arc::new(jobs);
    let fresh = run_parallel(
        Arc::clone(&backend),
        Arc::clone(&jobs),
        pending,
        opts,
        &filter,
        &mut writer,
    )?;

    let mut records: Vec<TrialRecord> = Vec::with_capacity(jobs.len());
    for job in jobs.iter() {
        let record = done
            .get(&job.trial_id)
            .or_else(|| fresh.get(&job.trial_id))
            .ok_or_else(|| CliError::data(format!("trial {} has no record", job.trial_id)))?;
        records.push(record.clone());
    }
    let mut sorted = records.clone();
    sorted.sort_by(|a, b| a.trial_id.cmp(&b.trial_id));

    let (aggregates, effects) = aggregate(spec, &sorted, &cell_meta, DEFAULT_Z)?;
    for record in &aggregates {
        writer.append(record)?;
    }
    let summary = SummaryRecord {
        trial_count: records.len() as u64,
        correct_count: records.iter().filter(|r| r.correct == Some(true)).count() as u64,
        incorrect_count: records.iter().filter(|r| r.correct == Some(false)).count() as u64,
        error_count: records.iter().filter(|r| r.error.is_some()).count() as u64,
    };
    writer.append(&Record::Summary(summary))?;
    writer.flush()?;

    Ok(RunOutcome {
        results_path: opts.out.clone(),
        summary,
        effects,
        noun_not_in_top_k: count_noun_misses(&records),
        over_error_budget: summary.error_count > opts.max_errors,
    })
}

fn count_noun_misses(records: &[TrialRecord]) -> u64 {
    records
        .iter()
        .filter(|r| r.error.as_deref() == Some("noun-not-in-top-k"))
        .count() as u64
}

fn verify_resume_manifest(existing: &RunManifest, current: &RunManifest) -> Result<(), CliError> {
    let mismatch = |what: &str| {
        Err(CliError::data(format!(
            "resume: existing results were produced with a different {what}"
        )))
    };
    if existing.experiment_id != current.experiment_id {
        return mismatch("experiment");
    }
    if existing.config != current.config {
        return mismatch("configuration");
    }
    if existing.lexicon_fingerprint != current.lexicon_fingerprint {
        return mismatch("lexicon");
    }
    if existing.noun_filter_fingerprint != current.noun_filter_fingerprint {
        return mismatch("noun filter");
    }
    if existing.backend != current.backend {
        return mismatch("backend");
    }
    if existing.top_k != current.top_k {
        return mismatch("top_k");
    }
    Ok(())
}
