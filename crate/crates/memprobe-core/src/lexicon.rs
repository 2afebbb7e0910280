//! Word lists, pronoun table, elaboration templates and distractor
//! material used to build serial-recall prompts.
//!
//! A [`Lexicon`] is immutable after construction and validated against a
//! set of structural invariants: 20 distinct entries per category, the
//! consonant rule for words preceded by the article "a", a pronoun for
//! every name, and exactly one elaboration template per object. The
//! bundled lexicon ships as compiled-in tables; the companion crate can
//! load user-supplied lexicon documents through [`Lexicon::from_parts`].

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Placeholder for the memorizing person's name in elaboration templates.
pub const NAME_SLOT: &str = "{name}";
/// Placeholder for the pronoun in elaboration templates.
pub const PRONOUN_SLOT: &str = "{pronoun}";

const BUNDLED_NAMES: [&str; 20] = [
    "Paul",
    "Helen",
    "Ann",
    "Mary",
    "David",
    "Mark",
    "Michael",
    "Susan",
    "Robert",
    "Peter",
    "Christine",
    "Sarah",
    "Ivan",
    "Charlotte",
    "Pierre",
    "Catherine",
    "Audrey",
    "John",
    "Amanda",
    "Kevin",
];

const BUNDLED_OBJECTS: [&str; 20] = [
    "bike",
    "cat",
    "dog",
    "guitar",
    "piano",
    "camera",
    "laptop",
    "motorcycle",
    "house",
    "sister",
    "brother",
    "trumpet",
    "keyboard",
    "violin",
    "Toyota",
    "Porsche",
    "Ford",
    "Mercedes",
    "horse",
    "boat",
];

const BUNDLED_OCCUPATIONS: [&str; 20] = [
    "biologist",
    "driver",
    "farmer",
    "mathematician",
    "physicist",
    "programmer",
    "journalist",
    "lawyer",
    "doctor",
    "surgeon",
    "psychologist",
    "politician",
    "nurse",
    "teacher",
    "writer",
    "soldier",
    "pilot",
    "baker",
    "painter",
    "musician",
];

const BUNDLED_CITIES: [&str; 20] = [
    "Dublin",
    "Copenhagen",
    "Budapest",
    "Warsaw",
    "Madrid",
    "Stockholm",
    "Tokyo",
    "Sydney",
    "Delhi",
    "Seattle",
    "Havana",
    "Cairo",
    "Melbourne",
    "Chicago",
    "Lisbon",
    "Honolulu",
    "Seoul",
    "Rome",
    "Athens",
    "Manila",
];

// The pronoun assignments are the conventional readings of the listed
// names; a user lexicon may override them.
const BUNDLED_PRONOUNS: [(&str, &str); 20] = [
    ("Paul", "he"),
    ("Helen", "she"),
    ("Ann", "she"),
    ("Mary", "she"),
    ("David", "he"),
    ("Mark", "he"),
    ("Michael", "he"),
    ("Susan", "she"),
    ("Robert", "he"),
    ("Peter", "he"),
    ("Christine", "she"),
    ("Sarah", "she"),
    ("Ivan", "he"),
    ("Charlotte", "she"),
    ("Pierre", "he"),
    ("Catherine", "she"),
    ("Audrey", "she"),
    ("John", "he"),
    ("Amanda", "she"),
    ("Kevin", "he"),
];

const BUNDLED_ELABORATIONS: [(&str, &str); 20] = [
    (
        "bike",
        "{name} has a bike, on which {pronoun} drives to work each day.",
    ),
    (
        "cat",
        "{name} has a cat, which passionately likes to play with a ball.",
    ),
    (
        "dog",
        "{name} has a dog, called Fido who just adores catching his rope toy.",
    ),
    (
        "guitar",
        "{name} has a guitar, an electric one, on which {pronoun} plays in a local garage band.",
    ),
    (
        "piano",
        "{name} has a piano, which unfortunately is a bit out of tune.",
    ),
    (
        "camera",
        "{name} has a camera, a quite heavy full-frame digital SLR with a couple of lenses.",
    ),
    (
        "laptop",
        "{name} has a laptop, which is covered with all kinds of stickers.",
    ),
    (
        "motorcycle",
        "{name} has a motorcycle, not a Harley-Davidson but rather an unasuming model which easily blends in.",
    ),
    (
        "house",
        "{name} has a house, situated in large garden in a nice quiet part of the town.",
    ),
    (
        "sister",
        "{name} has a sister, who is much younger, so they did not overlap at high school.",
    ),
    (
        "brother",
        "{name} has a brother, who went to school one year earlier, so school was a familiar ground.",
    ),
    (
        "trumpet",
        "{name} has a trumpet, on which {pronoun} regularly plays each weekend in the local jazz club.",
    ),
    (
        "keyboard",
        "{name} has a keyboard, on which {pronoun} tries to practice reading notes and playing standards.",
    ),
    (
        "violin",
        "{name} has a violin, on which {pronoun} tries to practice every morning to the dismay of neighbors.",
    ),
    (
        "Toyota",
        "{name} has a Toyota, an old model bought quite cheaply at a second-hand outlet.",
    ),
    (
        "Porsche",
        "{name} has a Porsche, painted red, almost matching the stereotypical image.",
    ),
    (
        "Ford",
        "{name} has a Ford, a sturdy pickup truck, very useful for the gardening business.",
    ),
    (
        "Mercedes",
        "{name} has a Mercedes, which so far has been very reliable, but now some minor problems start to surface.",
    ),
    (
        "horse",
        "{name} has a horse, which is kept on a farm just a few miles north of the city.",
    ),
    (
        "boat",
        "{name} has a boat, really a small dinghy, used for fishing on the lake.",
    ),
];

// Stored without the terminating period; the prompt renderer appends it.
const BUNDLED_COUNTRIES_COLOURS: [&str; 10] = [
    "The color of France on the map is blue",
    "The color of Finland on the map is white",
    "The color of Spain on the map is yellow",
    "The color of Japan on the map is purple",
    "The color of Italy on the map is green",
    "The color of India on the map is brown",
    "The color of Greece on the map is violet",
    "The color of Brazil on the map is orange",
    "The color of Denmark on the map is gray",
    "The color of Mexico on the map is red",
];

// Auxiliary names for the "occupations of different persons" distractor
// set; verified disjoint from the main 20 names at construction time.
const BUNDLED_OTHER_NAMES: [&str; 10] = [
    "George", "Laura", "Henry", "Nicole", "Oscar", "Diana", "Victor", "Emma", "Thomas", "Julia",
];

/// The kinds of interfering fact blocks that can be inserted into the
/// intervening text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistractorKind {
    /// Colours of countries on a map: fully unrelated facts.
    CountriesColours,
    /// Occupations of 10 persons disjoint from the memorized list.
    OtherPersonsOccupations,
    /// Occupations of the same persons that appear in the memorized list.
    SamePersonsOccupations,
}

impl DistractorKind {
    pub const ALL: [DistractorKind; 3] = [
        DistractorKind::CountriesColours,
        DistractorKind::OtherPersonsOccupations,
        DistractorKind::SamePersonsOccupations,
    ];

    pub fn label(self) -> &'static str {
        match self {
            DistractorKind::CountriesColours => "countries_colours",
            DistractorKind::OtherPersonsOccupations => "other_persons",
            DistractorKind::SamePersonsOccupations => "same_persons",
        }
    }
}

impl fmt::Display for DistractorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Grammatical pronoun used when rendering an elaboration template.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pronoun {
    He,
    She,
}

impl Pronoun {
    pub fn as_str(self) -> &'static str {
        match self {
            Pronoun::He => "he",
            Pronoun::She => "she",
        }
    }

    pub fn parse(s: &str) -> Option<Pronoun> {
        match s {
            "he" => Some(Pronoun::He),
            "she" => Some(Pronoun::She),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LexiconError {
    #[error("category {category}: expected {expected}, got {got}")]
    Cardinality {
        category: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("category {category}: duplicate entry {entry}")]
    Duplicate {
        category: &'static str,
        entry: String,
    },
    #[error("{kind} {word} violates consonant rule")]
    ConsonantRule { kind: &'static str, word: String },
    #[error("categories {a} and {b} overlap on {entry}")]
    CategoryOverlap {
        a: &'static str,
        b: &'static str,
        entry: String,
    },
    #[error("name {name} missing from pronoun map")]
    MissingPronoun { name: String },
    #[error("pronoun map entry {name}: {value} is not he/she")]
    InvalidPronoun { name: String, value: String },
    #[error("pronoun map names unknown person {name}")]
    UnknownPronounName { name: String },
    #[error("object {object} has no elaboration template")]
    MissingElaboration { object: String },
    #[error("elaboration keyed on unknown object {object}")]
    UnknownElaborationObject { object: String },
    #[error("elaboration for {object} must mention the object and the {{name}} slot")]
    BadElaborationTemplate { object: String },
    #[error("elaboration for {object} contains unknown placeholder")]
    UnknownPlaceholder { object: String },
    #[error("unknown name {name}")]
    UnknownName { name: String },
}

/// Raw, unvalidated lexicon contents as parsed from a lexicon document.
#[derive(Debug, Clone, Default)]
pub struct LexiconParts {
    pub names: Vec<String>,
    pub objects: Vec<String>,
    pub occupations: Vec<String>,
    pub cities: Vec<String>,
    pub pronouns: BTreeMap<String, String>,
    pub elaborations: BTreeMap<String, String>,
    pub countries_colours: Vec<String>,
    pub other_names: Vec<String>,
}

/// Validated, immutable word-list bundle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    names: Vec<String>,
    objects: Vec<String>,
    occupations: Vec<String>,
    cities: Vec<String>,
    pronouns: BTreeMap<String, Pronoun>,
    elaborations: BTreeMap<String, String>,
    countries_colours: Vec<String>,
    other_names: Vec<String>,
}

impl Lexicon {
    /// The default lexicon compiled into the crate.
    pub fn bundled() -> Lexicon {
        let parts = LexiconParts {
            names: BUNDLED_NAMES.iter().map(|s| s.to_string()).collect(),
            objects: BUNDLED_OBJECTS.iter().map(|s| s.to_string()).collect(),
            occupations: BUNDLED_OCCUPATIONS.iter().map(|s| s.to_string()).collect(),
            cities: BUNDLED_CITIES.iter().map(|s| s.to_string()).collect(),
            pronouns: BUNDLED_PRONOUNS
                .iter()
                .map(|(n, p)| (n.to_string(), p.to_string()))
                .collect(),
            elaborations: BUNDLED_ELABORATIONS
                .iter()
                .map(|(o, t)| (o.to_string(), t.to_string()))
                .collect(),
            countries_colours: BUNDLED_COUNTRIES_COLOURS
                .iter()
                .map(|s| s.to_string())
                .collect(),
            other_names: BUNDLED_OTHER_NAMES.iter().map(|s| s.to_string()).collect(),
        };
        Lexicon::from_parts(parts).expect("bundled lexicon satisfies its own invariants")
    }

    /// Validates raw contents and freezes them into a `Lexicon`.
    pub fn from_parts(parts: LexiconParts) -> Result<Lexicon, LexiconError> {
        check_category("names", &parts.names, 20)?;
        check_category("objects", &parts.objects, 20)?;
        check_category("occupations", &parts.occupations, 20)?;
        check_category("cities", &parts.cities, 20)?;
        check_category(
            "distractors.countries_colours",
            &parts.countries_colours,
            10,
        )?;
        check_category("distractors.other_names", &parts.other_names, 10)?;

        for word in &parts.objects {
            check_consonant("object", word)?;
        }
        for word in &parts.occupations {
            check_consonant("occupation", word)?;
        }

        let categories: [(&'static str, &[String]); 4] = [
            ("names", &parts.names),
            ("objects", &parts.objects),
            ("occupations", &parts.occupations),
            ("cities", &parts.cities),
        ];
        for i in 0..categories.len() {
            for j in (i + 1)..categories.len() {
                let (a_name, a) = categories[i];
                let (b_name, b) = categories[j];
                let b_set: BTreeSet<&str> = b.iter().map(|s| s.as_str()).collect();
                if let Some(entry) = a.iter().find(|w| b_set.contains(w.as_str())) {
                    return Err(LexiconError::CategoryOverlap {
                        a: a_name,
                        b: b_name,
                        entry: entry.clone(),
                    });
                }
            }
        }
        let name_set: BTreeSet<&str> = parts.names.iter().map(|s| s.as_str()).collect();
        if let Some(entry) = parts
            .other_names
            .iter()
            .find(|n| name_set.contains(n.as_str()))
        {
            return Err(LexiconError::CategoryOverlap {
                a: "distractors.other_names",
                b: "names",
                entry: entry.clone(),
            });
        }

        let mut pronouns = BTreeMap::new();
        for (name, value) in &parts.pronouns {
            if !name_set.contains(name.as_str()) {
                return Err(LexiconError::UnknownPronounName { name: name.clone() });
            }
            let p = Pronoun::parse(value).ok_or_else(|| LexiconError::InvalidPronoun {
                name: name.clone(),
                value: value.clone(),
            })?;
            pronouns.insert(name.clone(), p);
        }
        for name in &parts.names {
            if !pronouns.contains_key(name) {
                return Err(LexiconError::MissingPronoun { name: name.clone() });
            }
        }

        let object_set: BTreeSet<&str> = parts.objects.iter().map(|s| s.as_str()).collect();
        for object in parts.elaborations.keys() {
            if !object_set.contains(object.as_str()) {
                return Err(LexiconError::UnknownElaborationObject {
                    object: object.clone(),
                });
            }
        }
        for object in &parts.objects {
            let template =
                parts
                    .elaborations
                    .get(object)
                    .ok_or_else(|| LexiconError::MissingElaboration {
                        object: object.clone(),
                    })?;
            if !template.contains(object.as_str()) || !template.contains(NAME_SLOT) {
                return Err(LexiconError::BadElaborationTemplate {
                    object: object.clone(),
                });
            }
            // Only {name} and {pronoun} may appear as slots.
            let stripped = template.replace(NAME_SLOT, "").replace(PRONOUN_SLOT, "");
            if stripped.contains('{') || stripped.contains('}') {
                return Err(LexiconError::UnknownPlaceholder {
                    object: object.clone(),
                });
            }
        }

        Ok(Lexicon {
            names: parts.names,
            objects: parts.objects,
            occupations: parts.occupations,
            cities: parts.cities,
            pronouns,
            elaborations: parts.elaborations,
            countries_colours: parts.countries_colours,
            other_names: parts.other_names,
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn objects(&self) -> &[String] {
        &self.objects
    }

    pub fn occupations(&self) -> &[String] {
        &self.occupations
    }

    pub fn cities(&self) -> &[String] {
        &self.cities
    }

    pub fn countries_colours(&self) -> &[String] {
        &self.countries_colours
    }

    pub fn other_names(&self) -> &[String] {
        &self.other_names
    }

    /// All target words across the three categories.
    pub fn all_targets(&self) -> impl Iterator<Item = &String> {
        self.objects
            .iter()
            .chain(self.occupations.iter())
            .chain(self.cities.iter())
    }

    pub fn is_name(&self, name: &str) -> bool {
        self.names.iter().any(|n| n == name)
    }

    pub fn is_other_name(&self, name: &str) -> bool {
        self.other_names.iter().any(|n| n == name)
    }

    /// Pronoun for a list name, e.g. `"Paul" -> he`.
    pub fn pronoun(&self, name: &str) -> Result<Pronoun, LexiconError> {
        self.pronouns
            .get(name)
            .copied()
            .ok_or_else(|| LexiconError::UnknownName { name: name.into() })
    }

    /// Elaboration template for an object, with `{name}`/`{pronoun}` slots.
    pub fn elaboration(&self, object: &str) -> Option<&str> {
        self.elaborations.get(object).map(|s| s.as_str())
    }

    /// Hex SHA-256 of the canonical document; identifies the word material
    /// a schedule was generated from.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.canonical_document().as_bytes());
        hex(&digest)
    }

    /// Deterministic serialization of the lexicon. Parsing this document
    /// and re-serializing it reproduces the exact same bytes.
    pub fn canonical_document(&self) -> String {
        let mut out = String::new();
        out.push_str("# memprobe lexicon: word lists, pronoun table, elaboration templates\n");
        out.push_str("# and distractor material used to build serial-recall prompts.\n\n");
        emit_list(&mut out, "names", &self.names);
        emit_list(&mut out, "objects", &self.objects);
        emit_list(&mut out, "occupations", &self.occupations);
        emit_list(&mut out, "cities", &self.cities);
        out.push_str("[pronouns]\n");
        for name in &self.names {
            let p = self.pronouns[name];
            out.push_str(name);
            out.push_str(" = \"");
            out.push_str(p.as_str());
            out.push_str("\"\n");
        }
        out.push('\n');
        out.push_str("[elaborations]\n");
        for object in &self.objects {
            out.push_str(object);
            out.push_str(" = \"");
            out.push_str(&self.elaborations[object]);
            out.push_str("\"\n");
        }
        out.push('\n');
        out.push_str("[distractors]\n");
        emit_list(&mut out, "countries_colours", &self.countries_colours);
        emit_list(&mut out, "other_names", &self.other_names);
        // Drop the trailing blank line left by the last list.
        if out.ends_with("\n\n") {
            out.pop();
        }
        out
    }

    /// Checks every target word against a tokenizer, flagging words that
    /// do not survive as a single token. Words are tested with a single
    /// leading space, matching their in-sentence occurrence. Report-only;
    /// multi-token words fall back to first-token scoring.
    pub fn validate_against_tokenizer<F>(&self, mut tokenize: F) -> ValidationReport
    where
        F: FnMut(&str) -> Vec<String>,
    {
        let mut words = Vec::new();
        let categories: [(&'static str, &[String]); 3] = [
            ("objects", &self.objects),
            ("occupations", &self.occupations),
            ("cities", &self.cities),
        ];
        for (category, list) in categories {
            for word in list {
                let mut probe = String::with_capacity(word.len() + 1);
                probe.push(' ');
                probe.push_str(word);
                let tokens = tokenize(&probe);
                let status = match tokens.len() {
                    0 => TokenStatus::Degenerate,
                    1 => TokenStatus::SingleToken,
                    _ => TokenStatus::MultiToken,
                };
                words.push(WordTokenization {
                    word: word.clone(),
                    category,
                    tokens,
                    status,
                });
            }
        }
        ValidationReport { words }
    }
}

/// How a target word fared under the tokenizer being validated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenStatus {
    SingleToken,
    /// Scoring will fall back to the first token.
    MultiToken,
    /// The word produced no tokens at all.
    Degenerate,
}

#[derive(Debug, Clone, Serialize)]
pub struct WordTokenization {
    pub word: String,
    pub category: &'static str,
    pub tokens: Vec<String>,
    pub status: TokenStatus,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub words: Vec<WordTokenization>,
}

impl ValidationReport {
    /// Words that are not single tokens under the tokenizer.
    pub fn flagged(&self) -> impl Iterator<Item = &WordTokenization> {
        self.words
            .iter()
            .filter(|w| w.status != TokenStatus::SingleToken)
    }

    pub fn is_clean(&self) -> bool {
        self.flagged().next().is_none()
    }
}

fn check_category(
    category: &'static str,
    entries: &[String],
    expected: usize,
) -> Result<(), LexiconError> {
    if entries.len() != expected {
        return Err(LexiconError::Cardinality {
            category,
            expected,
            got: entries.len(),
        });
    }
    let mut seen = BTreeSet::new();
    for entry in entries {
        if !seen.insert(entry.as_str()) {
            return Err(LexiconError::Duplicate {
                category,
                entry: entry.clone(),
            });
        }
    }
    Ok(())
}

/// Words preceded by the article "a" must start with a consonant, so the
/// article never inflects to "an" and leaks a hint about the answer.
fn check_consonant(kind: &'static str, word: &str) -> Result<(), LexiconError> {
    let first = word.chars().next().map(|c| c.to_ascii_lowercase());
    match first {
        Some(c) if c.is_ascii_alphabetic() && !matches!(c, 'a' | 'e' | 'i' | 'o' | 'u') => Ok(()),
        _ => Err(LexiconError::ConsonantRule {
            kind,
            word: word.into(),
        }),
    }
}

fn emit_list(out: &mut String, key: &str, entries: &[String]) {
    out.push_str(key);
    out.push_str(" = [\n");
    for entry in entries {
        out.push_str("  \"");
        out.push_str(entry);
        out.push_str("\",\n");
    }
    out.push_str("]\n\n");
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    const HEX: &[u8; 16] = b"0123456789abcdef";
    let mut out = String::with_capacity(bytes.len() * 2);
    for &b in bytes {
        out.push(HEX[(b >> 4) as usize] as char);
        out.push(HEX[(b & 0x0f) as usize] as char);
    }
    out
}
