//! Deterministic experiment design: seeded random streams, fact-list
//! construction and the expansion of an experiment description into a
//! full schedule of trials.
//!
//! Reproducibility contract: a schedule is a pure function of the
//! experiment parameters, the lexicon fingerprint and the seed list.
//! The random stream is a splitmix64-seeded PCG32 with a single-draw
//! multiply-shift bounded sampler, so the exact same trials come out on
//! every platform and in any reimplementation that follows the same
//! recurrences.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::lexicon::{DistractorKind, Lexicon, LexiconError};
use crate::prompt::{InterveningKind, InterveningSpec, RepetitionPlacement};

/// Default seed set; five seeds by convention.
pub const DEFAULT_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
/// Independent permutations per seed.
pub const DEFAULT_PERMUTATIONS: u32 = 30;
/// Humpty-Dumpty count grid for the decay experiment.
pub const DEFAULT_DECAY_GRID: [u32; 14] = [0, 1, 2, 3, 5, 7, 10, 15, 20, 30, 40, 60, 80, 100];
/// Grid for the formation-time view: the low end of the decay grid.
pub const FORMATION_TIME_GRID: [u32; 8] = [0, 1, 2, 3, 5, 7, 10, 15];
/// Positions that receive elaborations in the elaborations experiment.
pub const DEFAULT_ELABORATION_POSITIONS: [u8; 3] = [5, 10, 15];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DesignError {
    #[error("list length {got} out of range 1..=20")]
    ListLength { got: u8 },
    #[error("experiment has no seeds")]
    NoSeeds,
    #[error("duplicate seed {seed}")]
    DuplicateSeed { seed: u64 },
    #[error("permutations must be at least 1")]
    NoPermutations,
    #[error("probe position {position} outside 1..={length}")]
    ProbePosition { position: u8, length: u8 },
    #[error("experiment {family}: {reason}")]
    BadParameters {
        family: &'static str,
        reason: String,
    },
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
}

/// SplitMix64; used to stretch a single u64 seed into independent
/// sub-seeds (one per permutation index) and to seed PCG32 streams.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> SplitMix64 {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
}

/// `index`-th output of the SplitMix64 stream seeded with `seed`.
/// Trial streams are derived as `derive_stream_seed(seed, permutation)`.
pub fn derive_stream_seed(seed: u64, index: u32) -> u64 {
    let mut sm = SplitMix64::new(seed);
    let mut value = sm.next_u64();
    for _ in 0..index {
        value = sm.next_u64();
    }
    value
}

/// PCG32 (XSH-RR 64/32) seeded through SplitMix64.
#[derive(Debug, Clone)]
pub struct Pcg32 {
    state: u64,
    inc: u64,
}

impl Pcg32 {
    const MULTIPLIER: u64 = 6_364_136_223_846_793_005;

    /// Reference seeding: two SplitMix64 outputs become the PCG32
    /// init-state and stream selector.
    pub fn from_seed(seed: u64) -> Pcg32 {
        let mut sm = SplitMix64::new(seed);
        let initstate = sm.next_u64();
        let initseq = sm.next_u64();
        let mut rng = Pcg32 {
            state: 0,
            inc: (initseq << 1) | 1,
        };
        rng.next_u32();
        rng.state = rng.state.wrapping_add(initstate);
        rng.next_u32();
        rng
    }

    pub fn next_u32(&mut self) -> u32 {
        let old = self.state;
        self.state = old.wrapping_mul(Self::MULTIPLIER).wrapping_add(self.inc);
        let xorshifted = (((old >> 18) ^ old) >> 27) as u32;
        let rot = (old >> 59) as u32;
        xorshifted.rotate_right(rot)
    }

    pub fn next_u64(&mut self) -> u64 {
        let hi = self.next_u32() as u64;
        let lo = self.next_u32() as u64;
        (hi << 32) | lo
    }

    /// Uniform-ish draw in `0..bound` consuming exactly one 32-bit output
    /// (multiply-shift; keeps the draw count independent of the values).
    pub fn next_below(&mut self, bound: u32) -> u32 {
        debug_assert!(bound > 0);
        ((self.next_u32() as u64 * bound as u64) >> 32) as u32
    }

    /// Fisher-Yates shuffle consuming exactly `len - 1` bounded draws.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i as u32 + 1) as usize;
            items.swap(i, j);
        }
    }
}

/// Returns a shuffled copy of `items`.
pub fn permute<T: Clone>(items: &[T], rng: &mut Pcg32) -> Vec<T> {
    let mut out = items.to_vec();
    rng.shuffle(&mut out);
    out
}

/// The three fact relationships, each bound to one lexicon category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationKind {
    HasA,
    IsA,
    LivesIn,
}

impl RelationKind {
    pub const ALL: [RelationKind; 3] =
        [RelationKind::HasA, RelationKind::IsA, RelationKind::LivesIn];

    pub fn label(self) -> &'static str {
        match self {
            RelationKind::HasA => "has_a",
            RelationKind::IsA => "is_a",
            RelationKind::LivesIn => "lives_in",
        }
    }

    pub fn parse(s: &str) -> Option<RelationKind> {
        match s {
            "has_a" => Some(RelationKind::HasA),
            "is_a" => Some(RelationKind::IsA),
            "lives_in" => Some(RelationKind::LivesIn),
            _ => None,
        }
    }

    /// The lexicon category this relation draws targets from.
    pub fn targets(self, lexicon: &Lexicon) -> &[String] {
        match self {
            RelationKind::HasA => lexicon.objects(),
            RelationKind::IsA => lexicon.occupations(),
            RelationKind::LivesIn => lexicon.cities(),
        }
    }
}

impl fmt::Display for RelationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One memorized item: person, relation, target word.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fact {
    pub name: String,
    pub relation: RelationKind,
    pub target: String,
}

/// Fully deterministic description of a single prompt+query trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSpec {
    pub experiment_id: String,
    pub seed: u64,
    pub permutation_index: u32,
    pub list_length: u8,
    pub relation: RelationKind,
    pub facts: Vec<Fact>,
    /// 1-based position of the probed fact.
    pub probe_position: u8,
    pub intervening: InterveningSpec,
    pub elaboration_positions: BTreeSet<u8>,
    /// Condition labels; the `condition` key names the cell.
    pub annotations: BTreeMap<String, String>,
    /// Seed for randomness consumed while rendering the intervening text
    /// (distractor ordering, repetition permutation). Captured from the
    /// trial stream right after fact-list construction, so a serialized
    /// trial renders identically on its own.
    pub aux_seed: u64,
}

impl TrialSpec {
    pub fn condition(&self) -> &str {
        self.annotations
            .get("condition")
            .map(|s| s.as_str())
            .unwrap_or("")
    }

    pub fn trial_id(&self) -> String {
        format!(
            "{}/{}/s{}/p{:02}/pos{:02}",
            self.experiment_id,
            self.condition(),
            self.seed,
            self.permutation_index,
            self.probe_position
        )
    }

    pub fn probed_fact(&self) -> &Fact {
        &self.facts[(self.probe_position - 1) as usize]
    }

    /// Ground-truth answer for this trial.
    pub fn target(&self) -> &str {
        &self.probed_fact().target
    }
}

/// An ordered set of trials plus the fingerprint of the lexicon they
/// were generated from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub experiment_id: String,
    pub lexicon_fingerprint: String,
    pub trials: Vec<TrialSpec>,
}

impl Schedule {
    /// Trials per (condition, probe position) cell.
    pub fn cell_counts(&self) -> BTreeMap<(String, u8), u64> {
        let mut counts = BTreeMap::new();
        for trial in &self.trials {
            *counts
                .entry((trial.condition().to_string(), trial.probe_position))
                .or_insert(0) += 1;
        }
        counts
    }
}

/// The built-in experiment families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    SerialPosition,
    Elaborations,
    Decay,
    Interference,
    Repetitions,
    FormationTime,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::SerialPosition,
        Family::Elaborations,
        Family::Decay,
        Family::Interference,
        Family::Repetitions,
        Family::FormationTime,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Family::SerialPosition => "serial_position",
            Family::Elaborations => "elaborations",
            Family::Decay => "decay",
            Family::Interference => "interference",
            Family::Repetitions => "repetitions",
            Family::FormationTime => "formation_time",
        }
    }

    pub fn parse(s: &str) -> Option<Family> {
        Family::ALL.iter().copied().find(|f| f.label() == s)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Parameters of one experiment; obtained from [`catalog`] and optionally
/// adjusted before calling [`make_schedule`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub id: String,
    pub family: Family,
    pub relations: Vec<RelationKind>,
    pub list_lengths: Vec<u8>,
    pub seeds: Vec<u64>,
    pub permutations: u32,
    /// Humpty-Dumpty counts (decay / formation_time).
    pub decay_grid: Vec<u32>,
    /// Elaborated positions (elaborations).
    pub elaboration_positions: Vec<u8>,
    /// Append the default connective before the query.
    pub connective: bool,
}

impl ExperimentSpec {
    fn base(id: &str, family: Family) -> ExperimentSpec {
        ExperimentSpec {
            id: id.to_string(),
            family,
            relations: alloc::vec![RelationKind::HasA],
            list_lengths: alloc::vec![20],
            seeds: DEFAULT_SEEDS.to_vec(),
            permutations: DEFAULT_PERMUTATIONS,
            decay_grid: Vec::new(),
            elaboration_positions: Vec::new(),
            connective: true,
        }
    }

    /// Trials this spec will expand to.
    pub fn trial_count(&self) -> u64 {
        let reps = self.seeds.len() as u64 * self.permutations as u64;
        let positions: u64 = match self.family {
            Family::SerialPosition => {
                self.relations.len() as u64
                    * self.list_lengths.iter().map(|&l| l as u64).sum::<u64>()
            }
            Family::Elaborations => 2 * self.list_lengths[0] as u64,
            Family::Decay | Family::FormationTime => {
                self.decay_grid.len() as u64 * self.list_lengths[0] as u64
            }
            Family::Interference => 4 * self.list_lengths[0] as u64,
            Family::Repetitions => 4 * self.list_lengths.iter().map(|&l| l as u64).sum::<u64>(),
        };
        positions * reps
    }
}

/// The built-in experiments with their default parameters.
pub fn catalog() -> Vec<ExperimentSpec> {
    let mut serial = ExperimentSpec::base("serial_position", Family::SerialPosition);
    serial.relations = RelationKind::ALL.to_vec();
    serial.list_lengths = alloc::vec![5, 10, 15, 20];

    let mut elaborations = ExperimentSpec::base("elaborations", Family::Elaborations);
    elaborations.list_lengths = alloc::vec![19];
    elaborations.elaboration_positions = DEFAULT_ELABORATION_POSITIONS.to_vec();

    let mut decay = ExperimentSpec::base("decay", Family::Decay);
    decay.list_lengths = alloc::vec![10];
    decay.decay_grid = DEFAULT_DECAY_GRID.to_vec();

    let mut interference = ExperimentSpec::base("interference", Family::Interference);
    interference.list_lengths = alloc::vec![10];

    let mut repetitions = ExperimentSpec::base("repetitions", Family::Repetitions);
    repetitions.list_lengths = (5..=20).collect();

    let mut formation = ExperimentSpec::base("formation_time", Family::FormationTime);
    formation.list_lengths = alloc::vec![10];
    formation.decay_grid = FORMATION_TIME_GRID.to_vec();

    alloc::vec![
        serial,
        elaborations,
        decay,
        interference,
        repetitions,
        formation
    ]
}

/// Look up a catalog entry by id.
pub fn catalog_entry(id: &str) -> Option<ExperimentSpec> {
    catalog().into_iter().find(|spec| spec.id == id)
}

/// Independently permutes names and targets, truncates both to `length`
/// and zips them into facts. Both category lists are always shuffled in
/// full so the stream position after this call does not depend on
/// `length`.
pub fn build_fact_list(
    lexicon: &Lexicon,
    relation: RelationKind,
    length: u8,
    rng: &mut Pcg32,
) -> Result<Vec<Fact>, DesignError> {
    if !(1..=20).contains(&length) {
        return Err(DesignError::ListLength { got: length });
    }
    let names = permute(lexicon.names(), rng);
    let targets = permute(relation.targets(lexicon), rng);
    Ok(names
        .into_iter()
        .zip(targets)
        .take(length as usize)
        .map(|(name, target)| Fact {
            name,
            relation,
            target,
        })
        .collect())
}

struct ConditionCell {
    label: String,
    relation: RelationKind,
    list_length: u8,
    intervening: InterveningSpec,
    elaboration_positions: BTreeSet<u8>,
    annotations: BTreeMap<String, String>,
}

impl ConditionCell {
    fn new(
        label: String,
        relation: RelationKind,
        list_length: u8,
        kind: InterveningKind,
        connective: bool,
    ) -> ConditionCell {
        ConditionCell {
            label,
            relation,
            list_length,
            intervening: InterveningSpec { kind, connective },
            elaboration_positions: BTreeSet::new(),
            annotations: BTreeMap::new(),
        }
    }

    fn annotate(mut self, key: &str, value: String) -> ConditionCell {
        self.annotations.insert(key.to_string(), value);
        self
    }
}

fn condition_cells(spec: &ExperimentSpec) -> Result<Vec<ConditionCell>, DesignError> {
    let bad = |reason: String| DesignError::BadParameters {
        family: spec.family.label(),
        reason,
    };
    if spec.list_lengths.is_empty() {
        return Err(bad("no list lengths".into()));
    }
    for &len in &spec.list_lengths {
        if !(1..=20).contains(&len) {
            return Err(DesignError::ListLength { got: len });
        }
    }
    let mut cells = Vec::new();
    match spec.family {
        Family::SerialPosition => {
            if spec.relations.is_empty() {
                return Err(bad("no relations".into()));
            }
            for &relation in &spec.relations {
                for &len in &spec.list_lengths {
                    cells.push(
                        ConditionCell::new(
                            format!("len{len:02}-{relation}"),
                            relation,
                            len,
                            InterveningKind::DefaultText,
                            spec.connective,
                        )
                        .annotate("length", len.to_string())
                        .annotate("relation", relation.to_string()),
                    );
                }
            }
        }
        Family::Elaborations => {
            let len = spec.list_lengths[0];
            if spec.relations != [RelationKind::HasA] {
                return Err(bad("elaborations are defined for has_a facts only".into()));
            }
            for &pos in &spec.elaboration_positions {
                if pos < 1 || pos > len {
                    return Err(DesignError::ProbePosition {
                        position: pos,
                        length: len,
                    });
                }
            }
            cells.push(ConditionCell::new(
                "baseline".into(),
                RelationKind::HasA,
                len,
                InterveningKind::DefaultText,
                spec.connective,
            ));
            let mut elaborated = ConditionCell::new(
                "elaborated".into(),
                RelationKind::HasA,
                len,
                InterveningKind::DefaultText,
                spec.connective,
            );
            elaborated.elaboration_positions = spec.elaboration_positions.iter().copied().collect();
            cells.push(elaborated);
        }
        Family::Decay | Family::FormationTime => {
            if spec.decay_grid.is_empty() {
                return Err(bad("empty decay grid".into()));
            }
            if spec.decay_grid.windows(2).any(|w| w[0] >= w[1]) {
                return Err(bad("decay grid must be strictly increasing".into()));
            }
            let len = spec.list_lengths[0];
            let relation = spec.relations[0];
            for &n in &spec.decay_grid {
                cells.push(
                    ConditionCell::new(
                        format!("hd{n:03}"),
                        relation,
                        len,
                        InterveningKind::HumptyRepeat { n },
                        spec.connective,
                    )
                    .annotate("hd", n.to_string()),
                );
            }
        }
        Family::Interference => {
            let len = spec.list_lengths[0];
            let relation = spec.relations[0];
            for kind in DistractorKind::ALL {
                cells.push(
                    ConditionCell::new(
                        format!("sandwich-{kind}"),
                        relation,
                        len,
                        InterveningKind::Sandwich { distractor: kind },
                        spec.connective,
                    )
                    .annotate("distractor", kind.to_string()),
                );
            }
            // Baseline: the distractor block replaced by 10 more
            // Humpty-Dumpty repetitions, 30 in total.
            cells.push(
                ConditionCell::new(
                    "hd-baseline".into(),
                    relation,
                    len,
                    InterveningKind::HumptyRepeat { n: 30 },
                    spec.connective,
                )
                .annotate("hd", "30".into()),
            );
        }
        Family::Repetitions => {
            let relation = spec.relations[0];
            for &len in &spec.list_lengths {
                let anno = |cell: ConditionCell| cell.annotate("length", len.to_string());
                cells.push(anno(ConditionCell::new(
                    format!("adjacent-len{len:02}"),
                    relation,
                    len,
                    InterveningKind::Repetition {
                        placement: RepetitionPlacement::Adjacent,
                        permuted: false,
                    },
                    spec.connective,
                )));
                cells.push(anno(ConditionCell::new(
                    format!("separated-len{len:02}"),
                    relation,
                    len,
                    InterveningKind::Repetition {
                        placement: RepetitionPlacement::Separated,
                        permuted: false,
                    },
                    spec.connective,
                )));
                cells.push(anno(ConditionCell::new(
                    format!("separated-permuted-len{len:02}"),
                    relation,
                    len,
                    InterveningKind::Repetition {
                        placement: RepetitionPlacement::Separated,
                        permuted: true,
                    },
                    spec.connective,
                )));
                // Length-matched baseline: (10 + n) Humpty-Dumpty units
                // stand in for the repeated list.
                cells.push(anno(ConditionCell::new(
                    format!("padding-len{len:02}"),
                    relation,
                    len,
                    InterveningKind::Padding { n: 10 + len as u32 },
                    spec.connective,
                )));
            }
        }
    }
    Ok(cells)
}

/// Expands an experiment into its deterministic trial schedule. Within
/// one (seed, permutation) pair the same fact list serves every probe
/// position, so a full recall curve is measured on the same 150 lists.
pub fn make_schedule(spec: &ExperimentSpec, lexicon: &Lexicon) -> Result<Schedule, DesignError> {
    if spec.seeds.is_empty() {
        return Err(DesignError::NoSeeds);
    }
    let mut seen = BTreeSet::new();
    for &seed in &spec.seeds {
        if !seen.insert(seed) {
            return Err(DesignError::DuplicateSeed { seed });
        }
    }
    if spec.permutations == 0 {
        return Err(DesignError::NoPermutations);
    }
    let cells = condition_cells(spec)?;
    let mut trials = Vec::new();
    for cell in &cells {
        for &seed in &spec.seeds {
            for perm in 0..spec.permutations {
                let mut rng = Pcg32::from_seed(derive_stream_seed(seed, perm));
                let facts = build_fact_list(lexicon, cell.relation, cell.list_length, &mut rng)?;
                let aux_seed = rng.next_u64();
                for position in 1..=cell.list_length {
                    let mut annotations = cell.annotations.clone();
                    annotations.insert("condition".into(), cell.label.clone());
                    trials.push(TrialSpec {
                        experiment_id: spec.id.clone(),
                        seed,
                        permutation_index: perm,
                        list_length: cell.list_length,
                        relation: cell.relation,
                        facts: facts.clone(),
                        probe_position: position,
                        intervening: cell.intervening.clone(),
                        elaboration_positions: cell.elaboration_positions.clone(),
                        annotations,
                        aux_seed,
                    });
                }
            }
        }
    }
    Ok(Schedule {
        experiment_id: spec.id.clone(),
        lexicon_fingerprint: lexicon.fingerprint(),
        trials,
    })
}
