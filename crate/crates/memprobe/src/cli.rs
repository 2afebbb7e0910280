//! The `memprobe` command line: catalog, run, report, validate.

use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use memprobe_core::backend::Backend;
use memprobe_core::design::{catalog, catalog_entry};
use memprobe_core::lexicon::Lexicon;

use crate::configfile::{ConfigFile, SpecOverrides, resolve_spec};
use crate::error::CliError;
use crate::fixtures::ScriptedBackend;
use crate::lexfile::load_lexicon;
use crate::report::{compare_files, render_records, render_summary, write_plot_data};
use crate::results::read_results;
use crate::runner::{self, RunOptions, build_filter, run_experiment};
use crate::wire::{API_KEY_ENV, ENDPOINT_ENV, WireBackend, WireConfig};

#[derive(Parser)]
#[command(
    name = "memprobe",
    version,
    about = "Serial-recall memory probing for language models",
    disable_help_subcommand = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Table,
    Records,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Wire,
    Scripted,
    Kernel,
}

#[derive(Subcommand)]
pub enum Command {
    /// List built-in experiments with their default parameters.
    Catalog {
        /// Show one experiment in full.
        experiment: Option<String>,
        #[arg(long, value_enum, default_value = "table")]
        format: OutputFormat,
    },
    /// Generate a schedule, query a backend, score and aggregate.
    Run(Box<RunArgs>),
    /// Render tables and plot data from a results file.
    Report(ReportArgs),
    /// Check every lexicon word and the noun filter against a backend
    /// tokenizer.
    Validate(ValidateArgs),
}

#[derive(Args, Debug)]
pub struct BackendArgs {
    #[arg(long, value_enum, default_value = "kernel")]
    pub backend: BackendKind,
    /// Wire endpoint (default: $MEMPROBE_ENDPOINT).
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Fixture file or directory for the scripted backend.
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
    /// Kernel preset: flat, u_curve, primacy_only, decay_interference.
    #[arg(long)]
    pub kernel_preset: Option<String>,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Catalog experiment to run (or set `experiment` in the config).
    #[arg(long)]
    pub experiment: Option<String>,
    /// TOML config file layered between catalog defaults and flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub backend: BackendArgs,
    /// Lexicon document (default: bundled).
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Distribution depth requested per query; 0 = full vocabulary
    /// (wire backend only).
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Concurrent in-flight requests.
    #[arg(long)]
    pub parallel: Option<usize>,
    /// Comma-separated seed list, e.g. 0,1,2,3,4.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub permutations: Option<u32>,
    /// Comma-separated list lengths.
    #[arg(long, value_delimiter = ',')]
    pub list_lengths: Option<Vec<u8>>,
    /// has_a, is_a or lives_in.
    #[arg(long)]
    pub relation: Option<String>,
    #[arg(long, default_value = "memprobe-results.jsonl")]
    pub out: PathBuf,
    /// Continue a partial results file, keyed by trial id.
    #[arg(long)]
    pub resume: bool,
    /// Score against the raw top token instead of the noun filter.
    #[arg(long)]
    pub no_noun_filter: bool,
    /// Extra noun-filter tokens, one per line.
    #[arg(long)]
    pub nouns: Option<PathBuf>,
    /// Write every prompt as a line-delimited record file.
    #[arg(long)]
    pub export_prompts: Option<PathBuf>,
    /// Write the trial schedule as a line-delimited record file.
    #[arg(long)]
    pub export_schedule: Option<PathBuf>,
    /// Tolerated errored trials before a nonzero exit.
    #[arg(long, default_value_t = 0)]
    pub max_errors: u64,
    /// Suppress progress output.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Results file produced by `memprobe run`.
    pub results: PathBuf,
    #[arg(long, value_enum, default_value = "table")]
    pub format: OutputFormat,
    /// Directory to write per-condition TSV plot data into.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Second results file to diff against (this - other).
    #[arg(long)]
    pub compare: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub backend: BackendArgs,
    /// Lexicon document (default: bundled).
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Extra noun-filter tokens, one per line.
    #[arg(long)]
    pub nouns: Option<PathBuf>,
}

fn build_backend(
    args: &BackendArgs,
    config: &ConfigFile,
    lexicon: &Lexicon,
) -> Result<Arc<dyn Backend + Send + Sync>, CliError> {
    match args.backend {
        BackendKind::Kernel => {
            let kernel_config = config.kernel_config(args.kernel_preset.as_deref())?;
            let label = args
                .kernel_preset
                .clone()
                .or_else(|| config.kernel.preset.clone())
                .unwrap_or_else(|| "u_curve".into());
            Ok(Arc::new(memprobe_core::backend::KernelBackend::with_label(
                kernel_config,
                lexicon.clone(),
                &label,
            )?))
        }
        BackendKind::Scripted => {
            let path = args.fixtures.as_deref().ok_or_else(|| {
                CliError::usage("--backend scripted needs --fixtures FILE_OR_DIR")
            })?;
            Ok(Arc::new(ScriptedBackend::load(path)?))
        }
        BackendKind::Wire => {
            let endpoint = args
                .endpoint
                .clone()
                .or_else(|| config.wire.endpoint.clone())
                .or_else(|| std::env::var(ENDPOINT_ENV).ok())
                .ok_or_else(|| {
                    CliError::usage(format!(
                        "--backend wire needs --endpoint or ${ENDPOINT_ENV}"
                    ))
                })?;
            let mut wire_config = WireConfig::new(endpoint);
            if let Some(path) = &config.wire.completion_path {
                wire_config.completion_path = path.clone();
            }
            if let Some(path) = &config.wire.tokenize_path {
                wire_config.tokenize_path = path.clone();
            }
            if let Some(ms) = config.wire.timeout_ms {
                wire_config.timeout = std::time::Duration::from_millis(ms);
            }
            if let Some(retries) = config.wire.retries {
                wire_config.retries = retries;
            }
            if let Some(ms) = config.wire.backoff_ms {
                wire_config.backoff = std::time::Duration::from_millis(ms);
            }
            wire_config.api_key = std::env::var(API_KEY_ENV).ok();
            Ok(Arc::new(WireBackend::new(wire_config)))
        }
    }
}

pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Catalog { experiment, format } => cmd_catalog(experiment.as_deref(), format),
        Command::Run(args) => cmd_run(*args),
        Command::Report(args) => cmd_report(args),
        Command::Validate(args) => cmd_validate(args),
    }
}

fn cmd_catalog(experiment: Option<&str>, format: OutputFormat) -> Result<(), CliError> {
    let entries = match experiment {
        Some(id) => vec![catalog_entry(id).ok_or_else(|| {
            CliError::usage(format!("unknown experiment {id:?}; run `memprobe catalog`"))
        })?],
        None => catalog(),
    };
    match format {
        OutputFormat::Records => {
            for spec in &entries {
                let line = serde_json::to_string(spec)
                    .map_err(|e| CliError::data(format!("encode spec: {e}")))?;
                println!("{line}");
            }
        }
        OutputFormat::Table => {
            for spec in &entries {
                let relations: Vec<&str> = spec.relations.iter().map(|r| r.label()).collect();
                let lengths: Vec<String> =
                    spec.list_lengths.iter().map(|l| l.to_string()).collect();
                println!(
                    "{:<16} relations={} list_lengths={} seeds={} permutations={} trials={}",
                    spec.id,
                    relations.join(","),
                    lengths.join(","),
                    spec.seeds.len(),
                    spec.permutations,
                    spec.trial_count(),
                );
                if !spec.decay_grid.is_empty() {
                    let grid: Vec<String> = spec.decay_grid.iter().map(|n| n.to_string()).collect();
                    println!("{:<16}   filler grid: {}", "", grid.join(","));
                }
                if !spec.elaboration_positions.is_empty() {
                    let positions: Vec<String> = spec
                        .elaboration_positions
                        .iter()
                        .map(|p| p.to_string())
                        .collect();
                    println!("{:<16}   elaborations at: {}", "", positions.join(","));
                }
            }
        }
    }
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let config = match &args.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let overrides = SpecOverrides {
        experiment: args.experiment.clone(),
        relation: args.relation.clone(),
        list_lengths: args.list_lengths.clone(),
        seeds: args.seeds.clone(),
        permutations: args.permutations,
    };
    let spec = resolve_spec(&config, &overrides)?;
    let lexicon = load_lexicon(args.lexicon.as_deref())?;
    let backend = build_backend(&args.backend, &config, &lexicon)?;
    let opts = RunOptions {
        top_k: args.top_k.or(config.top_k).unwrap_or(runner::DEFAULT_TOP_K),
        parallel: args
            .parallel
            .or(config.parallel)
            .unwrap_or(runner::DEFAULT_PARALLEL),
        max_errors: args.max_errors,
        out: args.out.clone(),
        resume: args.resume,
        no_noun_filter: args.no_noun_filter,
        extra_nouns: args.nouns.clone(),
        export_prompts: args.export_prompts.clone(),
        export_schedule: args.export_schedule.clone(),
        quiet: args.quiet,
    };
    if opts.top_k == 0 && args.backend.backend != BackendKind::Wire {
        return Err(CliError::usage(
            "--top-k 0 (full vocabulary) is only meaningful for the wire backend",
        ));
    }
    let outcome = run_experiment(&spec, &lexicon, backend, &opts)?;
    println!(
        "wrote {} ({} trials, {} correct, {} errors)",
        outcome.results_path.display(),
        outcome.summary.trial_count,
        outcome.summary.correct_count,
        outcome.summary.error_count
    );
    for report in &outcome.effects {
        println!(
            "{}: primacy {} recency {}",
            report.condition,
            if report.primacy_present {
                "present"
            } else {
                "absent"
            },
            if report.recency_present {
                "present"
            } else {
                "absent"
            },
        );
    }
    if outcome.noun_not_in_top_k > 0 {
        eprintln!(
            "memprobe: {} trials had no noun within the top {} tokens; consider raising --top-k \
             (these are excluded from accuracy, not counted as incorrect)",
            outcome.noun_not_in_top_k, opts.top_k
        );
    }
    if outcome.over_error_budget {
        return Err(CliError::backend(format!(
            "{} trials errored (budget {})",
            outcome.summary.error_count, args.max_errors
        )));
    }
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<(), CliError> {
    let results = read_results(&args.results)?;
    if let Some(other_path) = &args.compare {
        let other = read_results(other_path)?;
        print!("{}", compare_files(&results, &other)?);
        return Ok(());
    }
    if let Some(dir) = &args.out {
        let written = write_plot_data(&results, dir)?;
        for name in &written {
            println!("wrote {}", dir.join(name).display());
        }
    }
    match args.format {
        OutputFormat::Table => print!("{}", render_summary(&results)),
        OutputFormat::Records => print!("{}", render_records(&results)?),
    }
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Result<(), CliError> {
    let lexicon = load_lexicon(args.lexicon.as_deref())?;
    let config = ConfigFile::default();
    let backend = build_backend(&args.backend, &config, &lexicon)?;
    let mut tokenize_failure: Option<memprobe_core::backend::BackendError> = None;
    let report = lexicon.validate_against_tokenizer(|text| {
        if tokenize_failure.is_some() {
            return Vec::new();
        }
        match backend.tokenize(text) {
            Ok(tokens) => tokens,
            Err(err) => {
                tokenize_failure = Some(err);
                Vec::new()
            }
        }
    });
    if let Some(err) = tokenize_failure {
        return Err(err.into());
    }
    let flagged: Vec<_> = report.flagged().collect();
    println!(
        "checked {} target words: {} single-token, {} flagged",
        report.words.len(),
        report.words.len() - flagged.len(),
        flagged.len()
    );
    for word in &flagged {
        match word.status {
            memprobe_core::lexicon::TokenStatus::MultiToken => println!(
                "  {} ({}): {} tokens {:?} -- first-token fallback will score {:?}",
                word.word,
                word.category,
                word.tokens.len(),
                word.tokens,
                word.tokens[0],
            ),
            _ => println!("  {} ({}): produced no tokens", word.word, word.category),
        }
    }
    let filter = build_filter(&lexicon, &*backend, false, args.nouns.as_deref())?;
    println!(
        "noun filter: {} tokens, fingerprint {}",
        filter.len(),
        filter.fingerprint()
    );
    Ok(())
}
