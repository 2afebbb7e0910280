//! The correctness rule: a trial is recalled correctly iff the
//! highest-probability *noun* token equals the target token.
//!
//! Noun identification is allowlist-based rather than a live
//! part-of-speech tagger, so judgments are deterministic, portable and
//! auditable. The allowlist is built from the lexicon's own target words,
//! a bundled word list of frequent nouns and proper names, and any
//! user-supplied additions; function words are explicitly excluded. The
//! unrestricted mode (no noun filter at all) mirrors evaluation setups
//! where the token/word correspondence is too loose for an allowlist.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backend::TokenDistribution;
use crate::lexicon::{Lexicon, hex};

/// Bundled frequent nouns and proper names, one word per line.
const BUNDLED_NOUN_WORDS: &str = include_str!("../data/nouns.txt");

/// Words never counted as answer candidates, regardless of any list they
/// appear on: articles, pronouns, prepositions, auxiliaries.
const FUNCTION_WORDS: [&str; 48] = [
    "a", "an", "the", "he", "she", "it", "they", "we", "you", "i", "his", "her", "its", "their",
    "our", "your", "my", "in", "on", "at", "of", "to", "for", "with", "by", "from", "as", "is",
    "are", "was", "were", "be", "been", "has", "have", "had", "and", "or", "but", "not", "no",
    "so", "if", "then", "than", "that", "this", "there",
];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScoringError {
    #[error("target {target:?} tokenizes to nothing")]
    EmptyTokenization { target: String },
    #[error("noun filter is empty")]
    EmptyFilter,
    #[error("noun filter is missing lexicon target token {token:?}")]
    MissingLexiconTarget { token: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterProvenance {
    Bundled,
    UserSupplied,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum FilterMode {
    Allowlist {
        tokens: BTreeSet<String>,
        provenance: FilterProvenance,
    },
    /// Every token counts as a noun.
    Unrestricted,
}

/// The set of token texts regarded as nouns (leading-space forms).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NounFilter {
    mode: FilterMode,
}

impl NounFilter {
    /// Builds the allowlist: first tokens of all lexicon targets, first
    /// tokens of the bundled noun list, plus raw token texts from an
    /// optional user document (one token per line, `#` comments), minus
    /// the function words.
    pub fn build<F>(
        lexicon: &Lexicon,
        mut tokenize: F,
        extra_tokens: Option<&str>,
    ) -> Result<NounFilter, ScoringError>
    where
        F: FnMut(&str) -> Vec<String>,
    {
        let mut tokens = BTreeSet::new();
        let mut first_token = |word: &str| -> Option<String> {
            let mut probe = String::with_capacity(word.len() + 1);
            probe.push(' ');
            probe.push_str(word);
            tokenize(&probe).into_iter().next()
        };
        for word in lexicon.all_targets() {
            if let Some(token) = first_token(word) {
                tokens.insert(token);
            }
        }
        for line in BUNDLED_NOUN_WORDS.lines() {
            let word = line.trim();
            if word.is_empty() || word.starts_with('#') {
                continue;
            }
            if let Some(token) = first_token(word) {
                tokens.insert(token);
            }
        }
        if let Some(doc) = extra_tokens {
            for line in doc.lines() {
                let token = strip_comment(line);
                if !token.is_empty() {
                    tokens.insert(token.to_string());
                }
            }
        }
        for word in FUNCTION_WORDS {
            if let Some(token) = first_token(word) {
                tokens.remove(&token);
            }
        }
        let filter = NounFilter {
            mode: FilterMode::Allowlist {
                tokens,
                provenance: FilterProvenance::Bundled,
            },
        };
        filter.check_covers_lexicon(lexicon, first_token)?;
        Ok(filter)
    }

    /// Parses a noun-filter document: one token text per line, `#` starts
    /// a comment. Lines are taken literally (so leading spaces matter).
    pub fn from_token_lines(doc: &str) -> Result<NounFilter, ScoringError> {
        let tokens: BTreeSet<String> = doc
            .lines()
            .map(strip_comment)
            .filter(|t| !t.is_empty())
            .map(|t| t.to_string())
            .collect();
        if tokens.is_empty() {
            return Err(ScoringError::EmptyFilter);
        }
        Ok(NounFilter {
            mode: FilterMode::Allowlist {
                tokens,
                provenance: FilterProvenance::UserSupplied,
            },
        })
    }

    /// A filter that accepts every token; the top entry of a distribution
    /// is then always the top "noun".
    pub fn unrestricted() -> NounFilter {
        NounFilter {
            mode: FilterMode::Unrestricted,
        }
    }

    fn check_covers_lexicon<F>(
        &self,
        lexicon: &Lexicon,
        mut first_token: F,
    ) -> Result<(), ScoringError>
    where
        F: FnMut(&str) -> Option<String>,
    {
        for word in lexicon.all_targets() {
            if let Some(token) = first_token(word)
                && !self.contains(&token)
            {
                return Err(ScoringError::MissingLexiconTarget { token });
            }
        }
        Ok(())
    }

    pub fn contains(&self, token: &str) -> bool {
        match &self.mode {
            FilterMode::Allowlist { tokens, .. } => tokens.contains(token),
            FilterMode::Unrestricted => true,
        }
    }

    pub fn is_unrestricted(&self) -> bool {
        matches!(self.mode, FilterMode::Unrestricted)
    }

    pub fn provenance(&self) -> Option<FilterProvenance> {
        match &self.mode {
            FilterMode::Allowlist { provenance, .. } => Some(*provenance),
            FilterMode::Unrestricted => None,
        }
    }

    pub fn len(&self) -> usize {
        match &self.mode {
            FilterMode::Allowlist { tokens, .. } => tokens.len(),
            FilterMode::Unrestricted => 0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0 && !self.is_unrestricted()
    }

    /// One token per line, sorted; the serialization the fingerprint is
    /// computed over.
    pub fn to_lines(&self) -> String {
        match &self.mode {
            FilterMode::Allowlist { tokens, .. } => {
                let mut out = String::new();
                for token in tokens {
                    out.push_str(token);
                    out.push('\n');
                }
                out
            }
            FilterMode::Unrestricted => "# unrestricted\n".to_string(),
        }
    }

    pub fn fingerprint(&self) -> String {
        match &self.mode {
            FilterMode::Allowlist { .. } => hex(&Sha256::digest(self.to_lines().as_bytes())),
            FilterMode::Unrestricted => "unrestricted".to_string(),
        }
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(idx) => &line[..idx],
        None => line,
    }
    .trim_end_matches(['\r', '\n'])
}

/// Resolves a target word to the token it is scored against: the sole
/// token of `" word"`, or its first token with first-token mode flagged.
pub fn resolve_target_token<F>(
    target: &str,
    mut tokenize: F,
) -> Result<(String, bool), ScoringError>
where
    F: FnMut(&str) -> Vec<String>,
{
    let mut probe = String::with_capacity(target.len() + 1);
    probe.push(' ');
    probe.push_str(target);
    let tokens = tokenize(&probe);
    match tokens.len() {
        0 => Err(ScoringError::EmptyTokenization {
            target: target.to_string(),
        }),
        1 => Ok((tokens.into_iter().next().unwrap(), false)),
        _ => Ok((tokens.into_iter().next().unwrap(), true)),
    }
}

/// Why a trial produced no usable judgment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgmentErrorCode {
    /// No token of the distribution passed the noun filter; top_k is too
    /// small. Never counted as incorrect.
    NounNotInTopK,
    /// The backend failed after exhausting retries.
    Backend,
}

impl JudgmentErrorCode {
    pub fn label(self) -> &'static str {
        match self {
            JudgmentErrorCode::NounNotInTopK => "noun-not-in-top-k",
            JudgmentErrorCode::Backend => "backend",
        }
    }
}

/// Outcome of scoring one trial: either a verdict or an error; never both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum JudgmentOutcome {
    Scored {
        correct: bool,
        top_noun: String,
        /// Probability of the target token, when present in the
        /// distribution's truncation depth.
        target_prob: Option<f64>,
        /// 1-based rank of the target among the nouns, when present.
        target_rank_among_nouns: Option<u32>,
    },
    Errored {
        code: JudgmentErrorCode,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Judgment {
    pub trial_id: String,
    pub target_token: String,
    #[serde(flatten)]
    pub outcome: JudgmentOutcome,
}

impl Judgment {
    pub fn is_correct(&self) -> Option<bool> {
        match &self.outcome {
            JudgmentOutcome::Scored { correct, .. } => Some(*correct),
            JudgmentOutcome::Errored { .. } => None,
        }
    }

    pub fn error_code(&self) -> Option<JudgmentErrorCode> {
        match &self.outcome {
            JudgmentOutcome::Errored { code } => Some(*code),
            JudgmentOutcome::Scored { .. } => None,
        }
    }

    pub fn backend_error(trial_id: &str, target_token: &str) -> Judgment {
        Judgment {
            trial_id: trial_id.to_string(),
            target_token: target_token.to_string(),
            outcome: JudgmentOutcome::Errored {
                code: JudgmentErrorCode::Backend,
            },
        }
    }
}

/// Scans the distribution in descending-probability order; the first
/// entry passing the noun filter is the model's answer, and the trial is
/// correct iff that entry equals the target token.
pub fn judge(
    trial_id: &str,
    dist: &TokenDistribution,
    target_token: &str,
    filter: &NounFilter,
) -> Judgment {
    let mut top_noun: Option<&str> = None;
    let mut noun_rank = 0u32;
    let mut target_prob = None;
    let mut target_rank = None;
    for entry in dist.entries() {
        let is_noun = filter.contains(&entry.text);
        if is_noun {
            noun_rank += 1;
            if top_noun.is_none() {
                top_noun = Some(&entry.text);
            }
        }
        if entry.text == target_token {
            target_prob = Some(entry.prob());
            if is_noun {
                target_rank = Some(noun_rank);
            }
        }
    }
    let outcome = match top_noun {
        Some(noun) => JudgmentOutcome::Scored {
            correct: noun == target_token,
            top_noun: noun.to_string(),
            target_prob,
            target_rank_among_nouns: target_rank,
        },
        None => JudgmentOutcome::Errored {
            code: JudgmentErrorCode::NounNotInTopK,
        },
    };
    Judgment {
        trial_id: trial_id.to_string(),
        target_token: target_token.to_string(),
        outcome,
    }
}
