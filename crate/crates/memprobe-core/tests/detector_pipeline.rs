//! End-to-end checks of the analysis chain against the synthetic kernel:
//! schedule -> prompt -> distribution -> judgment -> statistics. The
//! kernel's closed-form weights predict every expected shape, so these
//! are derived oracles, not tuned thresholds.

use memprobe_core::backend::{Backend, KernelBackend, KernelConfig};
use memprobe_core::design::{ExperimentSpec, RelationKind, catalog_entry, make_schedule};
use memprobe_core::lexicon::Lexicon;
use memprobe_core::prompt::assemble_prompt;
use memprobe_core::scoring::{NounFilter, judge, resolve_target_token};
use memprobe_core::stats::{
    GroupedResult, TrialResult, aggregate_by_position, aggregate_decay, compare_conditions,
    detect_effects,
};

fn run(spec: &ExperimentSpec, kernel: &KernelBackend, lexicon: &Lexicon) -> Vec<TrialResult> {
    let filter = NounFilter::build(lexicon, |t| kernel.tokenize(t).unwrap(), None).unwrap();
    let schedule = make_schedule(spec, lexicon).unwrap();
    schedule
        .trials
        .iter()
        .map(|trial| {
            let prompt = assemble_prompt(trial, lexicon).unwrap();
            let (target_token, _) =
                resolve_target_token(&prompt.target, |t| kernel.tokenize(t).unwrap()).unwrap();
            let dist = kernel.next_token_distribution(&prompt.text, 50).unwrap();
            let judgment = judge(&prompt.trial_id, &dist, &target_token, &filter);
            TrialResult {
                trial_id: prompt.trial_id,
                condition: trial.condition().to_string(),
                probe_position: trial.probe_position,
                list_length: trial.list_length,
                correct: judgment.is_correct(),
            }
        })
        .collect()
}

#[test]
fn u_curve_kernel_shows_primacy_and_recency() {
    let lexicon = Lexicon::bundled();
    let kernel = KernelBackend::new(KernelConfig::u_curve(), lexicon.clone()).unwrap();
    let mut spec = catalog_entry("serial_position").unwrap();
    spec.relations = vec![RelationKind::HasA];
    spec.list_lengths = vec![20];
    let results = run(&spec, &kernel, &lexicon);
    let series = aggregate_by_position(&results, "len20-has_a", 1.96).unwrap();
    assert_eq!(series.errors_excluded, 0);
    let report = detect_effects(&series, 2, 1.96).unwrap();
    assert!(report.primacy_present, "{report:?}");
    assert!(report.recency_present, "{report:?}");
}

#[test]
fn elaboration_bonus_lifts_exactly_the_elaborated_positions() {
    let lexicon = Lexicon::bundled();
    let config = KernelConfig {
        elaboration_bonus: 20.0,
        query_match_weight: 30.0,
        ..KernelConfig::default()
    };
    let kernel = KernelBackend::new(config, lexicon.clone()).unwrap();
    let spec = catalog_entry("elaborations").unwrap();
    let results = run(&spec, &kernel, &lexicon);
    let baseline = aggregate_by_position(&results, "baseline", 1.96).unwrap();
    let elaborated = aggregate_by_position(&results, "elaborated", 1.96).unwrap();
    let deltas = compare_conditions(&elaborated, &baseline).unwrap();
    for cell in &deltas {
        if [5, 10, 15].contains(&cell.position) {
            assert!(
                cell.delta > 0.0 && cell.ci_low > 0.0,
                "elaborated position {} not lifted: {cell:?}",
                cell.position
            );
        } else {
            assert!(
                cell.delta < 0.0,
                "unelaborated position {} unexpectedly lifted: {cell:?}",
                cell.position
            );
        }
    }
}

#[test]
fn decay_series_rises_to_the_ramp_then_declines() {
    let lexicon = Lexicon::bundled();
    let kernel = KernelBackend::new(KernelConfig::decay_interference(), lexicon.clone()).unwrap();
    let spec = catalog_entry("decay").unwrap();
    let results = run(&spec, &kernel, &lexicon);
    let grouped: Vec<GroupedResult> = results
        .iter()
        .map(|r| GroupedResult {
            x: r.condition.trim_start_matches("hd").parse().unwrap(),
            correct: r.correct,
        })
        .collect();
    let series = aggregate_decay(&grouped, "decay", 1.96).unwrap();
    assert!(series.warnings.is_empty());
    let ramp = kernel.config().formation_ramp;
    for pair in series.points.windows(2) {
        if pair[1].x <= ramp {
            assert!(
                pair[1].accuracy > pair[0].accuracy,
                "expected rise {} -> {}: {pair:?}",
                pair[0].x,
                pair[1].x
            );
        }
        if pair[0].x >= ramp {
            assert!(
                pair[1].accuracy < pair[0].accuracy,
                "expected decline {} -> {}: {pair:?}",
                pair[0].x,
                pair[1].x
            );
        }
    }
}

#[test]
fn flat_kernel_with_decay_off_gives_flat_series() {
    let lexicon = Lexicon::bundled();
    let kernel = KernelBackend::new(KernelConfig::flat(), lexicon.clone()).unwrap();
    let mut spec = catalog_entry("decay").unwrap();
    spec.decay_grid = vec![0, 5, 10, 20];
    spec.seeds = vec![0, 1];
    let results = run(&spec, &kernel, &lexicon);
    let grouped: Vec<GroupedResult> = results
        .iter()
        .map(|r| GroupedResult {
            x: r.condition.trim_start_matches("hd").parse().unwrap(),
            correct: r.correct,
        })
        .collect();
    let series = aggregate_decay(&grouped, "flat", 1.96).unwrap();
    // delta=1 and ramp=0: the closed-form recall probability is the same
    // at every filler count, so all points estimate one proportion.
    let expected = {
        let trial_prompt = {
            let schedule = make_schedule(&spec, &lexicon).unwrap();
            assemble_prompt(&schedule.trials[0], &lexicon).unwrap().text
        };
        kernel.recall_probability(&trial_prompt).unwrap()
    };
    for point in &series.points {
        assert!(
            point.ci_low <= expected && expected <= point.ci_high,
            "point {point:?} not consistent with flat recall {expected}"
        );
    }
}
