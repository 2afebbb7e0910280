//! Aggregation of judgments into per-position accuracy series, Wilson
//! confidence intervals, decay curves, condition comparisons and
//! primacy/recency effect reports.
//!
//! Wilson score intervals (not Wald) throughout, for stability at
//! accuracies near 0 and 1 with 150-trial cells. Effect presence is an
//! operationalization of "visibly elevated edges": the margin between an
//! edge band and the middle third must be positive and the pooled Wilson
//! intervals of the two bands must be disjoint. Both the edge span and z
//! are exposed so the criterion can be tightened or loosened.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StatsError {
    #[error("wilson interval needs n >= 1, k <= n and z > 0 (k={k}, n={n})")]
    WilsonDomain { k: u64, n: u64 },
    #[error("no judgments for condition {condition}")]
    EmptyCondition { condition: String },
    #[error("mixed list lengths in one aggregation: {a} and {b}")]
    MixedListLengths { a: u8, b: u8 },
    #[error("list of {length} positions too short for edge span {edge_span}")]
    ListTooShort { length: u8, edge_span: u8 },
    #[error("no scored trials in the {band} band; cannot assess effects")]
    NoScoredTrials { band: &'static str },
    #[error("position series have different shapes ({a} vs {b} positions)")]
    MismatchedSeries { a: usize, b: usize },
    #[error("decay series is empty")]
    EmptySeries,
}

/// Wilson score interval for `k` successes in `n` trials at critical
/// value `z`. The k=0 and k=n edges are pinned to exactly 0 and 1.
pub fn wilson_interval(k: u64, n: u64, z: f64) -> Result<(f64, f64), StatsError> {
    if n == 0 || k > n || !z.is_finite() || z <= 0.0 {
        return Err(StatsError::WilsonDomain { k, n });
    }
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = (z / denom) * libm::sqrt(p * (1.0 - p) / nf + z2 / (4.0 * nf * nf));
    let low = if k == 0 {
        0.0
    } else {
        (center - half).max(0.0)
    };
    let high = if k == n {
        1.0
    } else {
        (center + half).min(1.0)
    };
    Ok((low, high))
}

/// One scored trial joined with the schedule metadata the aggregations
/// need. `correct: None` marks an errored trial, excluded from accuracy
/// denominators but tallied.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial_id: String,
    pub condition: String,
    pub probe_position: u8,
    pub list_length: u8,
    pub correct: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionCell {
    pub position: u8,
    pub n_trials: u64,
    pub n_correct: u64,
    pub accuracy: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Per-position recall accuracy for one condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionSeries {
    pub condition: String,
    pub z: f64,
    pub cells: Vec<PositionCell>,
    /// Errored trials excluded from the denominators.
    pub errors_excluded: u64,
}

impl PositionSeries {
    pub fn length(&self) -> u8 {
        self.cells.len() as u8
    }

    pub fn accuracy(&self, position: u8) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.position == position)
            .map(|c| c.accuracy)
    }

    /// Pooled (successes, trials) over an inclusive position band.
    fn pooled(&self, lo: u8, hi: u8) -> (u64, u64) {
        let mut k = 0;
        let mut n = 0;
        for cell in &self.cells {
            if cell.position >= lo && cell.position <= hi {
                k += cell.n_correct;
                n += cell.n_trials;
            }
        }
        (k, n)
    }

    fn band_mean(&self, lo: u8, hi: u8) -> f64 {
        let cells: Vec<&PositionCell> = self
            .cells
            .iter()
            .filter(|c| c.position >= lo && c.position <= hi)
            .collect();
        cells.iter().map(|c| c.accuracy).sum::<f64>() / cells.len() as f64
    }
}

/// Folds judgments of one condition into a per-position series. Input
/// order never matters: results are keyed by trial id before counting.
pub fn aggregate_by_position(
    results: &[TrialResult],
    condition: &str,
    z: f64,
) -> Result<PositionSeries, StatsError> {
    let mut selected: Vec<&TrialResult> = results
        .iter()
        .filter(|r| r.condition == condition)
        .collect();
    if selected.is_empty() {
        return Err(StatsError::EmptyCondition {
            condition: condition.to_string(),
        });
    }
    selected.sort_by(|a, b| a.trial_id.cmp(&b.trial_id));
    let length = selected[0].list_length;
    if let Some(other) = selected.iter().find(|r| r.list_length != length) {
        return Err(StatsError::MixedListLengths {
            a: length,
            b: other.list_length,
        });
    }
    let mut counts: BTreeMap<u8, (u64, u64)> = (1..=length).map(|p| (p, (0, 0))).collect();
    let mut errors = 0;
    for result in selected {
        let entry = counts.entry(result.probe_position).or_insert((0, 0));
        match result.correct {
            Some(correct) => {
                entry.1 += 1;
                if correct {
                    entry.0 += 1;
                }
            }
            None => errors += 1,
        }
    }
    let mut cells = Vec::with_capacity(counts.len());
    for (position, (k, n)) in counts {
        let (ci_low, ci_high) = if n == 0 {
            (0.0, 1.0)
        } else {
            wilson_interval(k, n, z)?
        };
        cells.push(PositionCell {
            position,
            n_trials: n,
            n_correct: k,
            accuracy: if n == 0 { 0.0 } else { k as f64 / n as f64 },
            ci_low,
            ci_high,
        });
    }
    Ok(PositionSeries {
        condition: condition.to_string(),
        z,
        cells,
        errors_excluded: errors,
    })
}

/// Primacy/recency detection parameters and verdict for one series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectReport {
    pub condition: String,
    pub primacy_present: bool,
    pub primacy_margin: f64,
    pub recency_present: bool,
    pub recency_margin: f64,
    pub edge_span: u8,
    /// Middle band (inclusive) the edges are compared against.
    pub middle_lo: u8,
    pub middle_hi: u8,
    pub z: f64,
}

/// Compares the first and last `edge_span` positions against the middle
/// third (rounded inward). An effect is present iff its margin is
/// positive and the pooled Wilson intervals of edge and middle band are
/// disjoint.
pub fn detect_effects(
    series: &PositionSeries,
    edge_span: u8,
    z: f64,
) -> Result<EffectReport, StatsError> {
    let length = series.length();
    if edge_span == 0 || length < 3 * edge_span {
        return Err(StatsError::ListTooShort { length, edge_span });
    }
    let middle_lo = length / 3 + if length.is_multiple_of(3) { 1 } else { 2 };
    let middle_hi = 2 * length / 3;
    let (mid_k, mid_n) = series.pooled(middle_lo, middle_hi);
    if mid_n == 0 {
        return Err(StatsError::NoScoredTrials { band: "middle" });
    }
    let (mid_low, mid_high) = wilson_interval(mid_k, mid_n, z)?;
    let mid_mean = series.band_mean(middle_lo, middle_hi);

    let edge = |lo: u8, hi: u8| -> Result<(f64, bool), StatsError> {
        let (k, n) = series.pooled(lo, hi);
        if n == 0 {
            return Err(StatsError::NoScoredTrials { band: "edge" });
        }
        let (low, high) = wilson_interval(k, n, z)?;
        let margin = series.band_mean(lo, hi) - mid_mean;
        let disjoint = low > mid_high || high < mid_low;
        Ok((margin, margin > 0.0 && disjoint))
    };
    let (primacy_margin, primacy_present) = edge(1, edge_span)?;
    let (recency_margin, recency_present) = edge(length - edge_span + 1, length)?;
    Ok(EffectReport {
        condition: series.condition.clone(),
        primacy_present,
        primacy_margin,
        recency_present,
        recency_margin,
        edge_span,
        middle_lo,
        middle_hi,
        z,
    })
}

/// Per-position accuracy difference with a Newcombe score interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaCell {
    pub position: u8,
    pub delta: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Difference of two proportions with the Newcombe interval built from
/// the two Wilson intervals.
pub fn newcombe_delta(
    k1: u64,
    n1: u64,
    k2: u64,
    n2: u64,
    z: f64,
) -> Result<(f64, f64, f64), StatsError> {
    let p1 = k1 as f64 / n1 as f64;
    let p2 = k2 as f64 / n2 as f64;
    let (l1, u1) = wilson_interval(k1, n1, z)?;
    let (l2, u2) = wilson_interval(k2, n2, z)?;
    let delta = p1 - p2;
    let low = delta - libm::sqrt((p1 - l1) * (p1 - l1) + (u2 - p2) * (u2 - p2));
    let high = delta + libm::sqrt((u1 - p1) * (u1 - p1) + (p2 - l2) * (p2 - l2));
    Ok((delta, low, high))
}

/// Per-position deltas `a - b` for two same-shape series.
pub fn compare_conditions(
    a: &PositionSeries,
    b: &PositionSeries,
) -> Result<Vec<DeltaCell>, StatsError> {
    if a.cells.len() != b.cells.len() {
        return Err(StatsError::MismatchedSeries {
            a: a.cells.len(),
            b: b.cells.len(),
        });
    }
    let z = a.z;
    a.cells
        .iter()
        .zip(&b.cells)
        .map(|(ca, cb)| {
            let (delta, ci_low, ci_high) =
                newcombe_delta(ca.n_correct, ca.n_trials, cb.n_correct, cb.n_trials, z)?;
            Ok(DeltaCell {
                position: ca.position,
                delta,
                ci_low,
                ci_high,
            })
        })
        .collect()
}

/// One trial tagged with the x value it is grouped under (a filler count
/// for decay curves, a list length for repetition summaries).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupedResult {
    pub x: u32,
    pub correct: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanPoint {
    pub x: u32,
    pub n_trials: u64,
    pub n_correct: u64,
    pub accuracy: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Mean accuracy as a function of a scalar condition parameter; for the
/// decay experiments x is the Humpty-Dumpty count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanSeries {
    pub label: String,
    pub z: f64,
    pub points: Vec<MeanPoint>,
    pub errors_excluded: u64,
    /// Non-fatal notes, e.g. unbalanced group sizes.
    pub warnings: Vec<String>,
}

pub type DecaySeries = MeanSeries;

/// Pools grouped judgments into a mean-accuracy-per-x series. Unequal
/// group sizes produce a warning, not an error.
pub fn aggregate_decay(
    results: &[GroupedResult],
    label: &str,
    z: f64,
) -> Result<MeanSeries, StatsError> {
    if results.is_empty() {
        return Err(StatsError::EmptySeries);
    }
    let mut groups: BTreeMap<u32, (u64, u64, u64)> = BTreeMap::new();
    for result in results {
        let entry = groups.entry(result.x).or_insert((0, 0, 0));
        match result.correct {
            Some(true) => {
                entry.0 += 1;
                entry.1 += 1;
            }
            Some(false) => entry.1 += 1,
            None => entry.2 += 1,
        }
    }
    let mut warnings = Vec::new();
    let sizes: Vec<u64> = groups.values().map(|(_, n, e)| n + e).collect();
    if sizes.windows(2).any(|w| w[0] != w[1]) {
        warnings.push("unbalanced group sizes".to_string());
    }
    let mut points = Vec::with_capacity(groups.len());
    let mut errors = 0;
    for (x, (k, n, e)) in groups {
        errors += e;
        let (ci_low, ci_high) = if n == 0 {
            (0.0, 1.0)
        } else {
            wilson_interval(k, n, z)?
        };
        points.push(MeanPoint {
            x,
            n_trials: n,
            n_correct: k,
            accuracy: if n == 0 { 0.0 } else { k as f64 / n as f64 },
            ci_low,
            ci_high,
        });
    }
    Ok(MeanSeries {
        label: label.to_string(),
        z,
        points,
        errors_excluded: errors,
        warnings,
    })
}

/// Signs of per-x accuracy differences between two mean series; used to
/// check whether a small effect keeps one sign across all list lengths.
pub fn delta_signs(a: &MeanSeries, b: &MeanSeries) -> Vec<(u32, i8)> {
    let b_points: BTreeMap<u32, f64> = b.points.iter().map(|p| (p.x, p.accuracy)).collect();
    a.points
        .iter()
        .filter_map(|p| {
            b_points.get(&p.x).map(|acc_b| {
                let diff = p.accuracy - acc_b;
                let sign = if diff > 0.0 {
                    1
                } else if diff < 0.0 {
                    -1
                } else {
                    0
                };
                (p.x, sign)
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::vec;

    fn series_from_accuracies(accuracies: &[f64], trials: u64) -> PositionSeries {
        let results: Vec<TrialResult> = accuracies
            .iter()
            .enumerate()
            .flat_map(|(idx, acc)| {
                let correct = (acc * trials as f64) as u64;
                (0..trials).map(move |t| TrialResult {
                    trial_id: format!("t/pos{:02}/{t:03}", idx + 1),
                    condition: "c".into(),
                    probe_position: idx as u8 + 1,
                    list_length: accuracies.len() as u8,
                    correct: Some(t < correct),
                })
            })
            .collect();
        aggregate_by_position(&results, "c", 1.96).unwrap()
    }

    #[test]
    fn wilson_edges_are_exact() {
        let (low, _) = wilson_interval(0, 150, 1.96).unwrap();
        assert_eq!(low, 0.0);
        let (_, high) = wilson_interval(150, 150, 1.96).unwrap();
        assert_eq!(high, 1.0);
    }

    #[test]
    fn wilson_matches_independent_evaluation() {
        // Frozen from an independent evaluation of the closed form.
        let (low, high) = wilson_interval(75, 150, 1.96).unwrap();
        assert!((low - 0.420988704690850).abs() < 1e-9, "low={low}");
        assert!((high - 0.579011295309150).abs() < 1e-9, "high={high}");
        let (low, high) = wilson_interval(139, 150, 1.96).unwrap();
        assert!((low - 0.873463014734016).abs() < 1e-9);
        assert!((high - 0.958561613194971).abs() < 1e-9);
    }

    #[test]
    fn wilson_domain_checks() {
        assert!(wilson_interval(1, 0, 1.96).is_err());
        assert!(wilson_interval(5, 4, 1.96).is_err());
        assert!(wilson_interval(1, 2, 0.0).is_err());
    }

    #[test]
    fn wilson_contains_point_estimate() {
        for k in 0..=20 {
            let (low, high) = wilson_interval(k, 20, 1.96).unwrap();
            let p = k as f64 / 20.0;
            assert!(low <= p && p <= high);
            assert!((0.0..=1.0).contains(&low) && (0.0..=1.0).contains(&high));
        }
    }

    #[test]
    fn aggregate_counts_and_accuracy() {
        let mut results = Vec::new();
        for t in 0..150 {
            results.push(TrialResult {
                trial_id: format!("e/c/s0/p{t:03}/pos01"),
                condition: "c".into(),
                probe_position: 1,
                list_length: 1,
                correct: Some(t < 139),
            });
        }
        let series = aggregate_by_position(&results, "c", 1.96).unwrap();
        assert_eq!(series.cells.len(), 1);
        let cell = &series.cells[0];
        assert_eq!((cell.n_correct, cell.n_trials), (139, 150));
        assert!((cell.accuracy - 139.0 / 150.0).abs() < 1e-12);
        assert!((cell.accuracy - 0.927).abs() < 1e-3);
    }

    #[test]
    fn aggregate_is_order_independent() {
        let mut results = Vec::new();
        for pos in 1..=4u8 {
            for t in 0..30 {
                results.push(TrialResult {
                    trial_id: format!("e/c/s0/p{t:02}/pos{pos:02}"),
                    condition: "c".into(),
                    probe_position: pos,
                    list_length: 4,
                    correct: Some((t + pos as u64).is_multiple_of(3)),
                });
            }
        }
        let forward = aggregate_by_position(&results, "c", 1.96).unwrap();
        results.reverse();
        let backward = aggregate_by_position(&results, "c", 1.96).unwrap();
        assert_eq!(forward, backward);
    }

    #[test]
    fn aggregate_rejects_empty_and_mixed_lengths() {
        assert!(matches!(
            aggregate_by_position(&[], "c", 1.96),
            Err(StatsError::EmptyCondition { .. })
        ));
        let results = vec![
            TrialResult {
                trial_id: "a".into(),
                condition: "c".into(),
                probe_position: 1,
                list_length: 4,
                correct: Some(true),
            },
            TrialResult {
                trial_id: "b".into(),
                condition: "c".into(),
                probe_position: 1,
                list_length: 5,
                correct: Some(true),
            },
        ];
        assert!(matches!(
            aggregate_by_position(&results, "c", 1.96),
            Err(StatsError::MixedListLengths { .. })
        ));
    }

    #[test]
    fn u_curve_detected() {
        let mut accuracies = vec![0.3; 12];
        accuracies[0] = 0.9;
        accuracies[1] = 0.9;
        accuracies[10] = 0.9;
        accuracies[11] = 0.9;
        let series = series_from_accuracies(&accuracies, 150);
        let report = detect_effects(&series, 2, 1.96).unwrap();
        assert!(report.primacy_present && report.recency_present);
        assert!((report.primacy_margin - 0.6).abs() < 1e-9);
        assert!((report.recency_margin - 0.6).abs() < 1e-9);
        assert_eq!((report.middle_lo, report.middle_hi), (5, 8));
    }

    #[test]
    fn flat_series_has_no_effects() {
        let series = series_from_accuracies(&[0.5; 12], 150);
        let report = detect_effects(&series, 2, 1.96).unwrap();
        assert!(!report.primacy_present && !report.recency_present);
        assert_eq!(report.primacy_margin, 0.0);
        assert_eq!(report.recency_margin, 0.0);
    }

    #[test]
    fn monotone_increasing_series_is_recency_only() {
        let accuracies: Vec<f64> = (0..12).map(|i| 0.1 + 0.07 * i as f64).collect();
        let series = series_from_accuracies(&accuracies, 150);
        let report = detect_effects(&series, 2, 1.96).unwrap();
        assert!(!report.primacy_present);
        assert!(report.recency_present);
        assert!(report.primacy_margin < 0.0);
        assert!(report.recency_margin > 0.0);
    }

    #[test]
    fn detection_rejects_short_lists() {
        let series = series_from_accuracies(&[0.5; 5], 10);
        assert!(matches!(
            detect_effects(&series, 2, 1.96),
            Err(StatsError::ListTooShort { .. })
        ));
    }

    #[test]
    fn detection_margins_invariant_under_doubling() {
        let mut accuracies = vec![0.4; 15];
        accuracies[0] = 0.8;
        accuracies[1] = 0.8;
        let single = series_from_accuracies(&accuracies, 100);
        let double = series_from_accuracies(&accuracies, 200);
        let a = detect_effects(&single, 2, 1.96).unwrap();
        let b = detect_effects(&double, 2, 1.96).unwrap();
        assert!((a.primacy_margin - b.primacy_margin).abs() < 1e-12);
        assert!((a.recency_margin - b.recency_margin).abs() < 1e-12);
        // Doubling the evidence can only sharpen a present effect.
        if a.primacy_present {
            assert!(b.primacy_present);
        }
        if a.recency_present {
            assert!(b.recency_present);
        }
    }

    #[test]
    fn compare_identity_is_zero() {
        let series = series_from_accuracies(&[0.2, 0.5, 0.9, 0.4, 0.1, 0.6], 50);
        let deltas = compare_conditions(&series, &series).unwrap();
        for cell in &deltas {
            assert_eq!(cell.delta, 0.0);
            assert!(cell.ci_low < 0.0 && cell.ci_high > 0.0);
        }
    }

    #[test]
    fn compare_is_antisymmetric() {
        let a = series_from_accuracies(&[0.2, 0.5, 0.9, 0.4, 0.1, 0.6], 50);
        let b = series_from_accuracies(&[0.3, 0.4, 0.8, 0.5, 0.2, 0.5], 50);
        let ab = compare_conditions(&a, &b).unwrap();
        let ba = compare_conditions(&b, &a).unwrap();
        for (x, y) in ab.iter().zip(&ba) {
            assert!((x.delta + y.delta).abs() < 1e-12);
            assert!((x.ci_low + y.ci_high).abs() < 1e-12);
            assert!((x.ci_high + y.ci_low).abs() < 1e-12);
        }
    }

    #[test]
    fn compare_rejects_mismatched_shapes() {
        let a = series_from_accuracies(&[0.5; 6], 10);
        let b = series_from_accuracies(&[0.5; 7], 10);
        assert!(matches!(
            compare_conditions(&a, &b),
            Err(StatsError::MismatchedSeries { .. })
        ));
    }

    #[test]
    fn decay_aggregation_groups_and_warns() {
        let mut results = Vec::new();
        for x in [0u32, 5, 10] {
            for t in 0..40 {
                results.push(GroupedResult {
                    x,
                    correct: Some(t % (x + 2) == 0),
                });
            }
        }
        let series = aggregate_decay(&results, "decay", 1.96).unwrap();
        assert_eq!(series.points.len(), 3);
        assert!(series.warnings.is_empty());
        assert!(series.points.windows(2).all(|w| w[0].x < w[1].x));

        results.push(GroupedResult {
            x: 10,
            correct: None,
        });
        let warned = aggregate_decay(&results, "decay", 1.96).unwrap();
        assert_eq!(warned.warnings, vec!["unbalanced group sizes".to_string()]);
        assert_eq!(warned.errors_excluded, 1);
    }

    #[test]
    fn single_group_series() {
        let results = vec![
            GroupedResult {
                x: 7,
                correct: Some(true)
            };
            20
        ];
        let series = aggregate_decay(&results, "one", 1.96).unwrap();
        assert_eq!(series.points.len(), 1);
        assert_eq!(series.points[0].accuracy, 1.0);
    }

    #[test]
    fn delta_signs_by_x() {
        let a = aggregate_decay(
            &[
                GroupedResult {
                    x: 1,
                    correct: Some(true),
                },
                GroupedResult {
                    x: 2,
                    correct: Some(false),
                },
                GroupedResult {
                    x: 3,
                    correct: Some(true),
                },
            ],
            "a",
            1.96,
        )
        .unwrap();
        let b = aggregate_decay(
            &[
                GroupedResult {
                    x: 1,
                    correct: Some(false),
                },
                GroupedResult {
                    x: 2,
                    correct: Some(false),
                },
                GroupedResult {
                    x: 3,
                    correct: Some(true),
                },
            ],
            "b",
            1.96,
        )
        .unwrap();
        assert_eq!(delta_signs(&a, &b), vec![(1, 1), (2, 0), (3, 0)]);
    }
}
