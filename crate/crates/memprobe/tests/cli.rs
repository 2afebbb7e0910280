//! Black-box tests of the `memprobe` binary: subcommands, flags, output
//! shapes and exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn memprobe(args: &[&str], dir: &Path, envs: &[(&str, &str)]) -> Output {
    let mut command = Command::new(env!("CARGO_BIN_EXE_memprobe"));
    command.args(args).current_dir(dir);
    for (key, value) in envs {
        command.env(key, value);
    }
    command.output().expect("spawn memprobe")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).to_string()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).to_string()
}

#[test]
fn catalog_lists_all_families() {
    let dir = tempfile::tempdir().unwrap();
    let output = memprobe(&["catalog"], dir.path(), &[]);
    assert!(output.status.success());
    let text = stdout(&output);
    for family in [
        "serial_position",
        "elaborations",
        "decay",
        "interference",
        "repetitions",
        "formation_time",
    ] {
        assert!(text.contains(family), "missing {family} in:\n{text}");
    }
}

#[test]
fn catalog_records_format_is_json_per_line() {
    let dir = tempfile::tempdir().unwrap();
    let output = memprobe(&["catalog", "--format", "records"], dir.path(), &[]);
    assert!(output.status.success());
    let text = stdout(&output);
    assert_eq!(text.lines().count(), 6);
    for line in text.lines() {
        let value: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(value["id"].is_string());
    }
}

#[test]
fn catalog_single_entry_shows_lengths() {
    let dir = tempfile::tempdir().unwrap();
    let output = memprobe(&["catalog", "serial_position"], dir.path(), &[]);
    assert!(output.status.success());
    assert!(stdout(&output).contains("list_lengths=5,10,15,20"));
}

#[test]
fn unknown_experiment_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let output = memprobe(&["run", "--experiment", "nope", "--quiet"], dir.path(), &[]);
    assert_eq!(output.status.code(), Some(1));
    assert!(stderr(&output).contains("unknown experiment"));
}

#[test]
fn bad_flag_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let output = memprobe(&["run", "--no-such-flag"], dir.path(), &[]);
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let output = memprobe(&["--help"], dir.path(), &[]);
    assert_eq!(output.status.code(), Some(0));
}

#[test]
fn run_kernel_u_curve_detects_both_effects() {
    let dir = tempfile::tempdir().unwrap();
    let output = memprobe(
        &[
            "run",
            "--experiment",
            "serial_position",
            "--backend",
            "kernel",
            "--kernel-preset",
            "u_curve",
            "--relation",
            "has_a",
            "--list-lengths",
            "20",
            "--out",
            "results.jsonl",
            "--quiet",
        ],
        dir.path(),
        &[],
    );
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    let text = stdout(&output);
    assert!(
        text.contains("len20-has_a: primacy present recency present"),
        "{text}"
    );
    assert!(dir.path().join("results.jsonl").exists());
}

#[test]
fn report_renders_tables_plot_data_and_compare() {
    let dir = tempfile::tempdir().unwrap();
    let run = |out: &str, seeds: &str| {
        let output = memprobe(
            &[
                "run",
                "--experiment",
                "serial_position",
                "--relation",
                "has_a",
                "--list-lengths",
                "12",
                "--seeds",
                seeds,
                "--permutations",
                "10",
                "--out",
                out,
                "--quiet",
            ],
            dir.path(),
            &[],
        );
        assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    };
    run("a.jsonl", "0,1");
    run("b.jsonl", "2,3");

    let report = memprobe(&["report", "a.jsonl"], dir.path(), &[]);
    assert_eq!(report.status.code(), Some(0));
    let text = stdout(&report);
    assert!(text.contains("[len12-has_a] accuracy by position"));
    // Header plus one row per position.
    let table_rows = text
        .lines()
        .skip_while(|l| !l.starts_with("position\t"))
        .take_while(|l| !l.is_empty())
        .count();
    assert_eq!(table_rows, 13);

    let records = memprobe(
        &["report", "a.jsonl", "--format", "records"],
        dir.path(),
        &[],
    );
    assert!(records.status.success());
    for line in stdout(&records).lines() {
        let value: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(value["type"].is_string());
    }

    let plot = memprobe(&["report", "a.jsonl", "--out", "plots"], dir.path(), &[]);
    assert!(plot.status.success());
    let tsv = dir.path().join("plots/positions_len12-has_a.tsv");
    let content = std::fs::read_to_string(&tsv).unwrap();
    assert!(content.starts_with("position\taccuracy\tci_low\tci_high\tn"));
    assert_eq!(content.lines().count(), 13);

    // Same file compared against itself: all deltas exactly zero.
    let self_compare = memprobe(
        &["report", "a.jsonl", "--compare", "a.jsonl"],
        dir.path(),
        &[],
    );
    assert!(self_compare.status.success());
    for line in stdout(&self_compare).lines().skip(2) {
        if line.is_empty() || line.starts_with('[') || line.starts_with("position") {
            continue;
        }
        let delta: f64 = line.split('\t').nth(1).unwrap().parse().unwrap();
        assert_eq!(delta, 0.0, "{line}");
    }

    let compare = memprobe(
        &["report", "a.jsonl", "--compare", "b.jsonl"],
        dir.path(),
        &[],
    );
    assert!(compare.status.success());
    assert!(stdout(&compare).contains("delta by position"));
}

#[test]
fn report_on_missing_file_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let output = memprobe(&["report", "missing.jsonl"], dir.path(), &[]);
    assert_eq!(output.status.code(), Some(3));
}

#[test]
fn run_with_unreachable_endpoint_fails_with_backend_code() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("wire.toml"),
        "[wire]\ntimeout_ms = 300\nretries = 1\nbackoff_ms = 1\n",
    )
    .unwrap();
    let output = memprobe(
        &[
            "run",
            "--experiment",
            "serial_position",
            "--config",
            "wire.toml",
            "--backend",
            "wire",
            "--endpoint",
            "http://127.0.0.1:9",
            "--list-lengths",
            "5",
            "--seeds",
            "0",
            "--permutations",
            "1",
            "--out",
            "never.jsonl",
            "--quiet",
        ],
        dir.path(),
        &[],
    );
    assert_eq!(output.status.code(), Some(2), "{}", stderr(&output));
    // The run aborted before any results were written.
    assert!(!dir.path().join("never.jsonl").exists());
}

#[test]
fn wire_without_endpoint_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let output = memprobe(
        &[
            "run",
            "--experiment",
            "decay",
            "--backend",
            "wire",
            "--quiet",
        ],
        dir.path(),
        &[],
    );
    assert_eq!(output.status.code(), Some(1));
    assert!(stderr(&output).contains("MEMPROBE_ENDPOINT"));
}

#[test]
fn pinned_timestamp_makes_reruns_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "run",
        "--experiment",
        "serial_position",
        "--relation",
        "lives_in",
        "--list-lengths",
        "8",
        "--seeds",
        "0",
        "--permutations",
        "5",
        "--quiet",
    ];
    let env = [("MEMPROBE_TIMESTAMP", "unix:777")];
    let mut outputs = Vec::new();
    for out in ["x.jsonl", "y.jsonl"] {
        let mut full: Vec<&str> = args.to_vec();
        full.extend_from_slice(&["--out", out]);
        let output = memprobe(&full, dir.path(), &env);
        assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
        outputs.push(std::fs::read(dir.path().join(out)).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn validate_flags_alternate_tokenizer_splits() {
    let dir = tempfile::tempdir().unwrap();
    // Tokenizer table splitting two words the way a different vocabulary
    // would; everything else stays single-token.
    let lexicon = memprobe_core::lexicon::Lexicon::bundled();
    let mut tokenizer = Vec::new();
    for word in lexicon.all_targets() {
        let probe = format!(" {word}");
        let tokens: Vec<String> = match word.as_str() {
            "trumpet" => vec![" trump".into(), "et".into()],
            "Porsche" => vec![" P".into(), "orsche".into()],
            _ => vec![probe.clone()],
        };
        tokenizer.push(serde_json::json!({"text": probe, "tokens": tokens}));
    }
    let fixture = serde_json::json!({"distributions": [], "tokenizer": tokenizer});
    std::fs::write(
        dir.path().join("tok.json"),
        serde_json::to_string(&fixture).unwrap(),
    )
    .unwrap();

    let output = memprobe(
        &[
            "validate",
            "--backend",
            "scripted",
            "--fixtures",
            "tok.json",
        ],
        dir.path(),
        &[],
    );
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    let text = stdout(&output);
    assert!(text.contains("2 flagged"), "{text}");
    assert!(text.contains("trumpet"), "{text}");
    assert!(text.contains("Porsche"), "{text}");
    assert!(text.contains("first-token fallback"), "{text}");

    // The kernel tokenizer keeps every word whole.
    let clean = memprobe(&["validate", "--backend", "kernel"], dir.path(), &[]);
    assert_eq!(clean.status.code(), Some(0));
    assert!(stdout(&clean).contains("60 single-token, 0 flagged"));
}

#[test]
fn run_records_first_token_fallback_for_split_targets() {
    let dir = tempfile::tempdir().unwrap();
    // Scripted backend with a splitting tokenizer and fixtures where the
    // first token of "trumpet" tops the noun ranking.
    let lexicon = memprobe_core::lexicon::Lexicon::bundled();
    let mut spec = memprobe_core::design::catalog_entry("serial_position").unwrap();
    spec.relations = vec![memprobe_core::design::RelationKind::HasA];
    spec.list_lengths = vec![3];
    spec.seeds = vec![0];
    spec.permutations = 1;
    let schedule = memprobe_core::design::make_schedule(&spec, &lexicon).unwrap();
    let mut distributions = Vec::new();
    let mut tokenizer = Vec::new();
    for word in lexicon.all_targets() {
        let probe = format!(" {word}");
        let tokens: Vec<String> = if word == "trumpet" {
            vec![" trump".into(), "et".into()]
        } else {
            vec![probe.clone()]
        };
        tokenizer.push(serde_json::json!({"text": probe, "tokens": tokens}));
    }
    for trial in &schedule.trials {
        let prompt = memprobe_core::prompt::assemble_prompt(trial, &lexicon).unwrap();
        let answer = if prompt.target == "trumpet" {
            " trump".to_string()
        } else {
            format!(" {}", prompt.target)
        };
        distributions.push(serde_json::json!({
            "prompt": prompt.text,
            "tokens": [
                {"text": " a", "prob": 0.2},
                {"text": answer, "prob": 0.1},
                {"text": " house", "prob": 0.05},
            ]
        }));
    }
    let fixture = serde_json::json!({"distributions": distributions, "tokenizer": tokenizer});
    std::fs::write(
        dir.path().join("fx.json"),
        serde_json::to_string(&fixture).unwrap(),
    )
    .unwrap();

    let output = memprobe(
        &[
            "run",
            "--experiment",
            "serial_position",
            "--relation",
            "has_a",
            "--list-lengths",
            "3",
            "--seeds",
            "0",
            "--permutations",
            "1",
            "--backend",
            "scripted",
            "--fixtures",
            "fx.json",
            "--out",
            "fallback.jsonl",
            "--quiet",
        ],
        dir.path(),
        &[],
    );
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    let results = memprobe::results::read_results(&dir.path().join("fallback.jsonl")).unwrap();
    // Seed-0 length-3 facts pair Peter/Ivan/Susan with trumpet/cat/horse.
    let trumpet_trial = results
        .trials
        .iter()
        .find(|t| t.target == "trumpet")
        .expect("schedule includes the trumpet fact");
    assert!(trumpet_trial.first_token_mode);
    assert_eq!(trumpet_trial.target_token, " trump");
    assert_eq!(trumpet_trial.correct, Some(true));
    let other = results
        .trials
        .iter()
        .find(|t| t.target != "trumpet")
        .unwrap();
    assert!(!other.first_token_mode);
}
