//! Access to "next-token distribution given a prompt".
//!
//! The [`Backend`] trait is the only thing the runner needs from a model.
//! Three implementations exist: the HTTP wire client and the scripted
//! fixture backend live in the companion crate; the synthetic
//! [`KernelBackend`] lives here because it is pure computation.
//!
//! The kernel is a deliberately simple memory model used to validate the
//! detectors, not to fit any real model's curves. It parses the prompt it
//! is given (fact list, filler count, distractors, query), assigns every
//! candidate target word a closed-form weight -- position kernel,
//! formation ramp, filler decay, same-name interference, query binding --
//! and realizes one draw from the induced categorical distribution via a
//! Gumbel-max perturbation keyed on (noise seed, prompt, token). Marginal
//! over prompts, the probability that a word ends up on top is exactly
//! its normalized weight, which makes closed-form oracles possible.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::design::RelationKind;
use crate::lexicon::Lexicon;

/// Filler tokens injected with fixed probability mass; they rank high but
/// are not nouns, so scoring must look past them.
pub const FILLER_TOKENS: [(&str, f64); 2] = [(" a", 0.12), (" the", 0.04)];

fn filler_mass() -> f64 {
    FILLER_TOKENS.iter().map(|(_, p)| p).sum()
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    #[error("empty prompt")]
    EmptyPrompt,
    #[error("top_k must be at least 1")]
    InvalidTopK,
    #[error("empty token distribution")]
    EmptyDistribution,
    #[error("duplicate token {token:?} in distribution")]
    DuplicateToken { token: String },
    #[error("full-vocabulary distribution sums to {sum}, expected 1 within 1e-4")]
    BadNormalization { sum: f64 },
    #[error("kernel could not parse prompt: {reason}")]
    KernelParse { reason: String },
    #[error("invalid kernel config: {reason}")]
    InvalidKernelConfig { reason: String },
    #[error("scripted fixture miss for prompt sha256 {sha256}")]
    FixtureMiss { sha256: String },
    #[error("tokenizer unavailable: {reason}")]
    TokenizerUnavailable { reason: String },
    #[error("no tokenization fixture for {text:?}")]
    TokenizeMiss { text: String },
    #[error("wire backend: {message}")]
    Wire { message: String, retryable: bool },
}

impl BackendError {
    /// Whether retrying the same request can possibly succeed.
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            BackendError::Wire {
                retryable: true,
                ..
            }
        )
    }
}

/// How deep the distribution goes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    TopK(usize),
    FullVocabulary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenEntry {
    pub text: String,
    pub logprob: f64,
}

impl TokenEntry {
    pub fn prob(&self) -> f64 {
        libm::exp(self.logprob)
    }
}

/// Candidate next tokens sorted by descending log-probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenDistribution {
    entries: Vec<TokenEntry>,
    truncation: Truncation,
}

impl TokenDistribution {
    /// Sorts entries by descending logprob (ties broken by token text for
    /// determinism) and checks the type invariants: tokens unique, and a
    /// full-vocabulary distribution sums to 1 within 1e-4.
    pub fn new(
        mut entries: Vec<TokenEntry>,
        truncation: Truncation,
    ) -> Result<TokenDistribution, BackendError> {
        if entries.is_empty() {
            return Err(BackendError::EmptyDistribution);
        }
        entries.sort_by(|a, b| {
            b.logprob
                .total_cmp(&a.logprob)
                .then_with(|| a.text.cmp(&b.text))
        });
        for pair in entries.windows(2) {
            if pair[0].text == pair[1].text {
                return Err(BackendError::DuplicateToken {
                    token: pair[0].text.clone(),
                });
            }
        }
        // windows(2) misses equal texts at different logprobs only if they
        // are not adjacent; do a full check via a sorted copy of texts.
        let mut texts: Vec<&str> = entries.iter().map(|e| e.text.as_str()).collect();
        texts.sort_unstable();
        for pair in texts.windows(2) {
            if pair[0] == pair[1] {
                return Err(BackendError::DuplicateToken {
                    token: pair[0].to_string(),
                });
            }
        }
        if truncation == Truncation::FullVocabulary {
            let sum: f64 = entries.iter().map(|e| e.prob()).sum();
            if (sum - 1.0).abs() > 1e-4 {
                return Err(BackendError::BadNormalization { sum });
            }
        }
        Ok(TokenDistribution {
            entries,
            truncation,
        })
    }

    pub fn entries(&self) -> &[TokenEntry] {
        &self.entries
    }

    pub fn truncation(&self) -> Truncation {
        self.truncation
    }

    pub fn find(&self, token: &str) -> Option<&TokenEntry> {
        self.entries.iter().find(|e| e.text == token)
    }
}

/// Next-token distribution given a prompt, plus the tokenizer that goes
/// with the model. Implementations must be deterministic: the same prompt
/// yields the same distribution.
pub trait Backend {
    fn next_token_distribution(
        &self,
        prompt: &str,
        top_k: usize,
    ) -> Result<TokenDistribution, BackendError>;

    fn tokenize(&self, text: &str) -> Result<Vec<String>, BackendError>;

    /// Short label for manifests; must not contain credentials.
    fn describe(&self) -> String;
}

/// Parameters of the synthetic memory kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelConfig {
    /// Extra weight for list positions `1..=primacy_span`.
    pub primacy_weight: f64,
    pub primacy_span: u8,
    /// Extra weight for the last `recency_span` positions.
    pub recency_weight: f64,
    pub recency_span: u8,
    /// Weight floor for every candidate word.
    pub base_weight: f64,
    /// Per same-name distractor fact, the true target's weight is scaled
    /// by (1 - this).
    pub same_name_interference: f64,
    /// Multiplicative decay per filler unit beyond the formation ramp.
    pub decay_per_hd: f64,
    /// Filler count at which recall saturates; below it the list weights
    /// ramp up linearly as (h+1)/(ramp+1).
    pub formation_ramp: u32,
    /// Softmax temperature for the emitted probabilities; the argmax is
    /// invariant under it.
    pub temperature: f64,
    pub noise_seed: u64,
    /// Extra weight for elaborated list positions.
    pub elaboration_bonus: f64,
    /// Multiplier (1 + this) on the word actually bound to the queried
    /// name; raises absolute recall without changing the position kernel.
    pub query_match_weight: f64,
}

impl Default for KernelConfig {
    fn default() -> KernelConfig {
        KernelConfig {
            primacy_weight: 0.0,
            primacy_span: 0,
            recency_weight: 0.0,
            recency_span: 0,
            base_weight: 1.0,
            same_name_interference: 0.0,
            decay_per_hd: 1.0,
            formation_ramp: 0,
            temperature: 1.0,
            noise_seed: 0,
            elaboration_bonus: 0.0,
            query_match_weight: 0.0,
        }
    }
}

impl KernelConfig {
    pub const PRESET_NAMES: [&'static str; 4] =
        ["flat", "u_curve", "primacy_only", "decay_interference"];

    /// No position structure at all; every list word is equally likely.
    pub fn flat() -> KernelConfig {
        KernelConfig {
            query_match_weight: 30.0,
            ..KernelConfig::default()
        }
    }

    /// Strong primacy and recency; produces the U-shaped recall curve.
    pub fn u_curve() -> KernelConfig {
        KernelConfig {
            primacy_weight: 12.0,
            primacy_span: 3,
            recency_weight: 8.0,
            recency_span: 2,
            elaboration_bonus: 15.0,
            query_match_weight: 30.0,
            ..KernelConfig::default()
        }
    }

    /// Primacy without recency, the small-model pattern.
    pub fn primacy_only() -> KernelConfig {
        KernelConfig {
            recency_weight: 0.0,
            recency_span: 0,
            ..KernelConfig::u_curve()
        }
    }

    /// Mild filler decay with a formation ramp, plus strong same-name
    /// interference; exercises the decay and interference detectors.
    pub fn decay_interference() -> KernelConfig {
        KernelConfig {
            decay_per_hd: 0.95,
            formation_ramp: 10,
            same_name_interference: 0.6,
            query_match_weight: 30.0,
            ..KernelConfig::default()
        }
    }

    pub fn preset(name: &str) -> Option<KernelConfig> {
        match name {
            "flat" => Some(KernelConfig::flat()),
            "u_curve" => Some(KernelConfig::u_curve()),
            "primacy_only" => Some(KernelConfig::primacy_only()),
            "decay_interference" => Some(KernelConfig::decay_interference()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        let bad = |reason: &str| {
            Err(BackendError::InvalidKernelConfig {
                reason: reason.into(),
            })
        };
        // NaN fails every range check.
        let non_negative = |x: f64| (0.0..f64::INFINITY).contains(&x);
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !non_negative(self.primacy_weight) || !non_negative(self.recency_weight) {
            return bad("position weights must be non-negative");
        }
        if !positive(self.base_weight) {
            return bad("base_weight must be positive");
        }
        if !(0.0..=1.0).contains(&self.same_name_interference) {
            return bad("same_name_interference must lie in [0, 1]");
        }
        if !positive(self.decay_per_hd) || self.decay_per_hd > 1.0 {
            return bad("decay_per_hd must lie in (0, 1]");
        }
        if !positive(self.temperature) {
            return bad("temperature must be positive");
        }
        if !non_negative(self.elaboration_bonus) || !non_negative(self.query_match_weight) {
            return bad("bonus weights must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct ParsedFact {
    name: String,
    relation: RelationKind,
    target: String,
    elaborated: bool,
}

#[derive(Debug, Clone)]
struct ParsedPrompt {
    /// The memorized list: the leading run of fact sentences, cut at the
    /// first repeated name (which marks an adjacent repetition block).
    list: Vec<ParsedFact>,
    /// Fact sentences seen after the list ended (repetitions and
    /// distractors).
    post_facts: Vec<ParsedFact>,
    /// Filler units anywhere in the prompt.
    hd_count: u32,
    query_name: String,
    query_relation: RelationKind,
    /// 1-based position of the queried fact in the list.
    probe_position: usize,
}

impl ParsedPrompt {
    fn true_target(&self) -> &str {
        &self.list[self.probe_position - 1].target
    }

    /// Distractor facts about the queried person (exact repetitions of
    /// the probed fact do not interfere).
    fn same_name_distractors(&self) -> u32 {
        self.post_facts
            .iter()
            .filter(|f| {
                f.name == self.query_name
                    && !self.list.iter().any(|l| {
                        l.name == f.name && l.relation == f.relation && l.target == f.target
                    })
            })
            .count() as u32
    }
}

/// Synthetic memory-kernel model over a fixed lexicon.
#[derive(Debug, Clone)]
pub struct KernelBackend {
    config: KernelConfig,
    lexicon: Lexicon,
    label: String,
}

impl KernelBackend {
    pub fn new(config: KernelConfig, lexicon: Lexicon) -> Result<KernelBackend, BackendError> {
        config.validate()?;
        Ok(KernelBackend {
            config,
            lexicon,
            label: "kernel".into(),
        })
    }

    pub fn with_label(
        config: KernelConfig,
        lexicon: Lexicon,
        label: &str,
    ) -> Result<KernelBackend, BackendError> {
        config.validate()?;
        Ok(KernelBackend {
            config,
            lexicon,
            label: format!("kernel({label})"),
        })
    }

    pub fn config(&self) -> &KernelConfig {
        &self.config
    }

    fn parse(&self, prompt: &str) -> Result<ParsedPrompt, BackendError> {
        let err = |reason: &str| BackendError::KernelParse {
            reason: reason.into(),
        };
        if prompt.is_empty() {
            return Err(BackendError::EmptyPrompt);
        }
        let query_start = prompt.rfind('.').map(|i| i + 1).unwrap_or(0);
        let query = prompt[query_start..].trim_start();
        if query.is_empty() {
            return Err(err("no query fragment after the last sentence"));
        }
        let (query_name, query_relation) = if let Some(name) = query.strip_suffix(" has a") {
            (name, RelationKind::HasA)
        } else if let Some(name) = query.strip_suffix(" is a") {
            (name, RelationKind::IsA)
        } else if let Some(name) = query.strip_suffix(" lives in") {
            (name, RelationKind::LivesIn)
        } else {
            return Err(err("query does not end in a known relation stem"));
        };
        if !self.lexicon.is_name(query_name) {
            return Err(err("query names an unknown person"));
        }

        let mut list: Vec<ParsedFact> = Vec::new();
        let mut post_facts = Vec::new();
        let mut hd_count = 0u32;
        let mut in_list = true;
        for raw in prompt[..query_start].split('.') {
            let sentence = raw.trim();
            if sentence.is_empty() {
                continue;
            }
            if sentence == "Humpty Dumpty" {
                in_list = false;
                hd_count += 1;
                continue;
            }
            match self.parse_fact(sentence) {
                Some(fact) => {
                    if in_list && list.iter().any(|f| f.name == fact.name) {
                        in_list = false;
                    }
                    if in_list {
                        list.push(fact);
                    } else {
                        post_facts.push(fact);
                    }
                }
                None => in_list = false,
            }
        }
        if list.is_empty() {
            return Err(err("no fact list found"));
        }
        let probe_position = list
            .iter()
            .position(|f| f.name == query_name)
            .map(|i| i + 1)
            .ok_or_else(|| err("query name does not appear in the fact list"))?;
        if list[probe_position - 1].relation != query_relation {
            return Err(err("query relation does not match the listed fact"));
        }
        Ok(ParsedPrompt {
            list,
            post_facts,
            hd_count,
            query_name: query_name.to_string(),
            query_relation,
            probe_position,
        })
    }

    /// Parses one sentence as a fact if it has the exact shape
    /// "Name has a X[ , elaboration...]" / "Name is a X" / "Name lives in X".
    fn parse_fact(&self, sentence: &str) -> Option<ParsedFact> {
        let words: Vec<&str> = sentence.split(' ').collect();
        if words.len() < 4 {
            return None;
        }
        let name = words[0];
        if !self.lexicon.is_name(name) && !self.lexicon.is_other_name(name) {
            return None;
        }
        let (relation, target_word, elaborated) = match (words[1], words[2]) {
            ("has", "a") => {
                let raw = words[3];
                let trimmed = raw.trim_end_matches(',');
                let elaborated = words.len() > 4 || raw.ends_with(',');
                (RelationKind::HasA, trimmed, elaborated)
            }
            ("is", "a") if words.len() == 4 => (RelationKind::IsA, words[3], false),
            ("lives", "in") if words.len() == 4 => (RelationKind::LivesIn, words[3], false),
            _ => return None,
        };
        if !relation
            .targets(&self.lexicon)
            .iter()
            .any(|t| t == target_word)
        {
            return None;
        }
        Some(ParsedFact {
            name: name.to_string(),
            relation,
            target: target_word.to_string(),
            elaborated,
        })
    }

    /// Closed-form pre-noise weight for every candidate target word of
    /// the queried relation, in lexicon order. Normalizing these weights
    /// gives the exact marginal probability of each word topping the noun
    /// ranking, which is what the derived-oracle tests evaluate.
    pub fn candidate_weights(&self, prompt: &str) -> Result<Vec<(String, f64)>, BackendError> {
        let parsed = self.parse(prompt)?;
        let cfg = &self.config;
        let list_len = parsed.list.len();
        let h = parsed.hd_count;
        let hd_factor = if h <= cfg.formation_ramp {
            (h + 1) as f64 / (cfg.formation_ramp + 1) as f64
        } else {
            libm::pow(cfg.decay_per_hd, (h - cfg.formation_ramp) as f64)
        };
        let true_target = parsed.true_target().to_string();
        let same_name = parsed.same_name_distractors();
        let weights = parsed
            .query_relation
            .targets(&self.lexicon)
            .iter()
            .map(|word| {
                let weight = match parsed.list.iter().position(|f| &f.target == word) {
                    Some(index) => {
                        let position = index + 1;
                        let mut w = cfg.base_weight;
                        if position <= cfg.primacy_span as usize {
                            w += cfg.primacy_weight;
                        }
                        if position + (cfg.recency_span as usize) > list_len {
                            w += cfg.recency_weight;
                        }
                        if parsed.list[index].elaborated {
                            w += cfg.elaboration_bonus;
                        }
                        w *= hd_factor;
                        if *word == true_target {
                            w *= 1.0 + cfg.query_match_weight;
                            if same_name > 0 {
                                let interference =
                                    libm::pow(1.0 - cfg.same_name_interference, same_name as f64);
                                w *= if interference > 1e-12 {
                                    interference
                                } else {
                                    1e-12
                                };
                            }
                        }
                        w
                    }
                    None => cfg.base_weight,
                };
                (word.clone(), weight)
            })
            .collect();
        Ok(weights)
    }

    /// Marginal probability that the true target tops the noun ranking
    /// for this prompt: its normalized closed-form weight.
    pub fn recall_probability(&self, prompt: &str) -> Result<f64, BackendError> {
        let parsed = self.parse(prompt)?;
        let target = parsed.true_target().to_string();
        let weights = self.candidate_weights(prompt)?;
        let total: f64 = weights.iter().map(|(_, w)| w).sum();
        let own = weights
            .iter()
            .find(|(word, _)| *word == target)
            .map(|(_, w)| *w)
            .unwrap_or(0.0);
        Ok(own / total)
    }
}

impl Backend for KernelBackend {
    fn next_token_distribution(
        &self,
        prompt: &str,
        top_k: usize,
    ) -> Result<TokenDistribution, BackendError> {
        if top_k == 0 {
            return Err(BackendError::InvalidTopK);
        }
        let weights = self.candidate_weights(prompt)?;
        let tau = self.config.temperature;
        let mut scores: Vec<(String, f64)> = weights
            .iter()
            .map(|(word, weight)| {
                let noise = gumbel(hash64(self.config.noise_seed, prompt, word));
                (format!(" {word}"), (libm::log(*weight) + noise) / tau)
            })
            .collect();
        let max_score = scores
            .iter()
            .map(|(_, s)| *s)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (_, score) in scores.iter_mut() {
            *score = libm::exp(*score - max_score);
            total += *score;
        }
        let noun_mass = 1.0 - filler_mass();
        let mut entries: Vec<TokenEntry> = scores
            .into_iter()
            .map(|(text, score)| TokenEntry {
                text,
                logprob: libm::log(score / total * noun_mass),
            })
            .collect();
        for (text, prob) in FILLER_TOKENS {
            entries.push(TokenEntry {
                text: text.to_string(),
                logprob: libm::log(prob),
            });
        }
        let full = top_k >= entries.len();
        entries.sort_by(|a, b| b.logprob.total_cmp(&a.logprob));
        entries.truncate(top_k);
        TokenDistribution::new(
            entries,
            if full {
                Truncation::FullVocabulary
            } else {
                Truncation::TopK(top_k)
            },
        )
    }

    /// Word-level tokenizer: every whitespace-separated word is one token
    /// carrying its leading space.
    fn tokenize(&self, text: &str) -> Result<Vec<String>, BackendError> {
        Ok(split_space_tokens(text))
    }

    fn describe(&self) -> String {
        self.label.clone()
    }
}

/// Tokenizes text as whole words with leading spaces: `" Dublin"` is one
/// token, `"Paul lives"` is `["Paul", " lives"]`.
pub fn split_space_tokens(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut first = !text.starts_with(' ');
    for word in text.split_whitespace() {
        if first {
            tokens.push(word.to_string());
            first = false;
        } else {
            tokens.push(format!(" {word}"));
        }
    }
    tokens
}

fn hash64(seed: u64, prompt: &str, token: &str) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut hash = OFFSET;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            hash ^= b as u64;
            hash = hash.wrapping_mul(PRIME);
        }
    };
    eat(&seed.to_le_bytes());
    eat(prompt.as_bytes());
    eat(&[0x1f]);
    eat(token.as_bytes());
    // FNV's upper bits avalanche poorly for inputs differing only in the
    // tail; finalize with the splitmix64 mixer before drawing from them.
    hash = (hash ^ (hash >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    hash = (hash ^ (hash >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    hash ^ (hash >> 31)
}

/// Standard Gumbel(0, 1) noise from a hash: argmax of
/// `ln(weight) + gumbel` is a categorical sample with probabilities
/// proportional to the weights.
fn gumbel(hash: u64) -> f64 {
    let unit = ((hash >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64);
    -libm::log(-libm::log(unit))
}
