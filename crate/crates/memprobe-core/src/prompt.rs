//! Renders trials into the exact preceding text and query.
//!
//! Prompt bytes are part of the reproducibility contract: the same trial
//! always renders to the same string, and golden fixtures pin the exact
//! output for the bundled lexicon at seed 0. Conventions worth knowing:
//!
//! * Sentences are joined by a single space; the query is never
//!   terminated and ends directly after "a"/"in" with no trailing space.
//!   Target tokens are therefore matched in their leading-space form.
//! * The default connective ("Now, after you received all this
//!   information, ...") follows every intervening variant unless the
//!   trial disables it.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::design::{Fact, Pcg32, RelationKind, TrialSpec, permute};
use crate::lexicon::{DistractorKind, Lexicon, LexiconError, NAME_SLOT, PRONOUN_SLOT};

/// One semantically empty filler unit.
pub const HUMPTY_SENTENCE: &str = "Humpty Dumpty.";

/// The default text separating the fact list from the query.
pub const DEFAULT_CONNECTIVE: &str = "Now, after you received all this information, try to \
     concentrate, drink a cup of coffee, go for a walk. Then please complete the following \
     sentence.";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("elaboration requested for {relation} fact about {name}")]
    ElaborationUnsupported {
        relation: RelationKind,
        name: String,
    },
    #[error("no elaboration template for object {object}")]
    MissingElaboration { object: String },
    #[error(
        "distractor {kind} needs {needed} occupations disjoint from the list, found {available}"
    )]
    DistractorPool {
        kind: DistractorKind,
        needed: usize,
        available: usize,
    },
    #[error("distractor {kind} needs a list of at least {needed} facts, got {got}")]
    DistractorListTooShort {
        kind: DistractorKind,
        needed: usize,
        got: usize,
    },
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
}

/// Where the repeated fact list is placed relative to the filler block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepetitionPlacement {
    /// repetition, then 10 filler units.
    Adjacent,
    /// 10 filler units, then the repetition.
    Separated,
}

/// What goes between the fact list and the query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InterveningKind {
    /// Just the default connective text.
    DefaultText,
    /// `n` Humpty-Dumpty units.
    HumptyRepeat { n: u32 },
    /// 10 filler units, 10 distracting facts, 10 filler units.
    Sandwich { distractor: DistractorKind },
    /// The trial's own fact list repeated, optionally permuted.
    Repetition {
        placement: RepetitionPlacement,
        permuted: bool,
    },
    /// Length-matched filler baseline for the repetition conditions.
    Padding { n: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterveningSpec {
    #[serde(flatten)]
    pub kind: InterveningKind,
    /// Append [`DEFAULT_CONNECTIVE`] before the query.
    pub connective: bool,
}

impl InterveningSpec {
    pub fn default_text() -> InterveningSpec {
        InterveningSpec {
            kind: InterveningKind::DefaultText,
            connective: true,
        }
    }

    pub fn humpty(n: u32) -> InterveningSpec {
        InterveningSpec {
            kind: InterveningKind::HumptyRepeat { n },
            connective: true,
        }
    }
}

/// A fully rendered prompt: everything before the target word.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptText {
    pub trial_id: String,
    pub text: String,
    /// Ground-truth target word (bare form, no leading space).
    pub target: String,
    /// Set once scoring resolves the target to a first token because the
    /// word is not a single token under the active tokenizer.
    pub target_first_token_mode: bool,
}

/// Renders one fact as a sentence; `elaborated` substitutes the
/// elaboration template (has-a facts only).
pub fn render_fact(
    fact: &Fact,
    lexicon: &Lexicon,
    elaborated: bool,
) -> Result<String, PromptError> {
    if elaborated {
        if fact.relation != RelationKind::HasA {
            return Err(PromptError::ElaborationUnsupported {
                relation: fact.relation,
                name: fact.name.clone(),
            });
        }
        let template =
            lexicon
                .elaboration(&fact.target)
                .ok_or_else(|| PromptError::MissingElaboration {
                    object: fact.target.clone(),
                })?;
        let pronoun = lexicon.pronoun(&fact.name)?;
        return Ok(template
            .replace(NAME_SLOT, &fact.name)
            .replace(PRONOUN_SLOT, pronoun.as_str()));
    }
    Ok(match fact.relation {
        RelationKind::HasA => format!("{} has a {}.", fact.name, fact.target),
        RelationKind::IsA => format!("{} is a {}.", fact.name, fact.target),
        RelationKind::LivesIn => format!("{} lives in {}.", fact.name, fact.target),
    })
}

/// The probed fact truncated immediately before the target word, with no
/// trailing space.
pub fn render_query(fact: &Fact) -> String {
    match fact.relation {
        RelationKind::HasA => format!("{} has a", fact.name),
        RelationKind::IsA => format!("{} is a", fact.name),
        RelationKind::LivesIn => format!("{} lives in", fact.name),
    }
}

/// Renders the intervening text for a trial. Randomness (repetition
/// permutation, distractor occupation assignment) is drawn from `rng`,
/// which callers seed from the trial's `aux_seed`.
pub fn render_intervening(
    spec: &InterveningSpec,
    trial: &TrialSpec,
    lexicon: &Lexicon,
    rng: &mut Pcg32,
) -> Result<String, PromptError> {
    let mut sentences: Vec<String> = Vec::new();
    let push_humpty = |sentences: &mut Vec<String>, n: u32| {
        for _ in 0..n {
            sentences.push(HUMPTY_SENTENCE.to_string());
        }
    };
    match spec.kind {
        InterveningKind::DefaultText => {}
        InterveningKind::HumptyRepeat { n } | InterveningKind::Padding { n } => {
            push_humpty(&mut sentences, n);
        }
        InterveningKind::Sandwich { distractor } => {
            push_humpty(&mut sentences, 10);
            sentences.extend(distractor_sentences(distractor, trial, lexicon, rng)?);
            push_humpty(&mut sentences, 10);
        }
        InterveningKind::Repetition {
            placement,
            permuted,
        } => {
            let facts = if permuted {
                permute(&trial.facts, rng)
            } else {
                trial.facts.clone()
            };
            let mut repeated = Vec::with_capacity(facts.len());
            for fact in &facts {
                repeated.push(render_fact(fact, lexicon, false)?);
            }
            match placement {
                RepetitionPlacement::Adjacent => {
                    sentences.extend(repeated);
                    push_humpty(&mut sentences, 10);
                }
                RepetitionPlacement::Separated => {
                    push_humpty(&mut sentences, 10);
                    sentences.extend(repeated);
                }
            }
        }
    }
    if spec.connective {
        sentences.push(DEFAULT_CONNECTIVE.to_string());
    }
    Ok(sentences.join(" "))
}

/// The ten distracting fact sentences for a sandwich block.
fn distractor_sentences(
    kind: DistractorKind,
    trial: &TrialSpec,
    lexicon: &Lexicon,
    rng: &mut Pcg32,
) -> Result<Vec<String>, PromptError> {
    match kind {
        DistractorKind::CountriesColours => Ok(lexicon
            .countries_colours()
            .iter()
            .map(|s| format!("{s}."))
            .collect()),
        DistractorKind::OtherPersonsOccupations | DistractorKind::SamePersonsOccupations => {
            // Occupations are drawn disjointly from the trial's own
            // targets so a distractor can never leak the answer.
            let used: Vec<&str> = trial.facts.iter().map(|f| f.target.as_str()).collect();
            let pool: Vec<String> = lexicon
                .occupations()
                .iter()
                .filter(|occ| !used.contains(&occ.as_str()))
                .cloned()
                .collect();
            if pool.len() < 10 {
                return Err(PromptError::DistractorPool {
                    kind,
                    needed: 10,
                    available: pool.len(),
                });
            }
            let occupations = permute(&pool, rng);
            let names: Vec<String> = match kind {
                DistractorKind::OtherPersonsOccupations => lexicon.other_names().to_vec(),
                _ => {
                    if trial.facts.len() < 10 {
                        return Err(PromptError::DistractorListTooShort {
                            kind,
                            needed: 10,
                            got: trial.facts.len(),
                        });
                    }
                    trial
                        .facts
                        .iter()
                        .take(10)
                        .map(|f| f.name.clone())
                        .collect()
                }
            };
            Ok(names
                .iter()
                .zip(occupations.iter())
                .map(|(name, occ)| format!("{name} is a {occ}."))
                .collect())
        }
    }
}

/// Assembles the full prompt for a trial: fact sentences, intervening
/// text, query -- joined by single spaces.
pub fn assemble_prompt(trial: &TrialSpec, lexicon: &Lexicon) -> Result<PromptText, PromptError> {
    let mut segments: Vec<String> = Vec::new();
    let mut fact_sentences = Vec::with_capacity(trial.facts.len());
    for (index, fact) in trial.facts.iter().enumerate() {
        let elaborated = trial.elaboration_positions.contains(&(index as u8 + 1));
        fact_sentences.push(render_fact(fact, lexicon, elaborated)?);
    }
    segments.push(fact_sentences.join(" "));
    let mut rng = Pcg32::from_seed(trial.aux_seed);
    let intervening = render_intervening(&trial.intervening, trial, lexicon, &mut rng)?;
    if !intervening.is_empty() {
        segments.push(intervening);
    }
    segments.push(render_query(trial.probed_fact()));
    Ok(PromptText {
        trial_id: trial.trial_id(),
        text: segments.join(" "),
        target: trial.target().to_string(),
        target_first_token_mode: false,
    })
}
