//! The lexicon document format: a TOML file with `names`, `objects`,
//! `occupations`, `cities`, `pronouns`, `elaborations` and `distractors`
//! sections. Serialization goes through the core's canonical emitter, so
//! loading the bundled file and saving it again is byte-identical.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use memprobe_core::lexicon::{Lexicon, LexiconParts};

use crate::error::CliError;

/// The default lexicon document shipped with the harness.
pub const BUNDLED_LEXICON_TOML: &str = include_str!("../data/lexicon.toml");

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LexiconDoc {
    names: Vec<String>,
    objects: Vec<String>,
    occupations: Vec<String>,
    cities: Vec<String>,
    pronouns: BTreeMap<String, String>,
    elaborations: BTreeMap<String, String>,
    distractors: DistractorsDoc,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DistractorsDoc {
    countries_colours: Vec<String>,
    other_names: Vec<String>,
}

/// Parses and validates a lexicon document.
pub fn parse_lexicon(doc: &str) -> Result<Lexicon, CliError> {
    let parsed: LexiconDoc =
        toml::from_str(doc).map_err(|e| CliError::data(format!("lexicon parse: {e}")))?;
    let lexicon = Lexicon::from_parts(LexiconParts {
        names: parsed.names,
        objects: parsed.objects,
        occupations: parsed.occupations,
        cities: parsed.cities,
        pronouns: parsed.pronouns,
        elaborations: parsed.elaborations,
        countries_colours: parsed.distractors.countries_colours,
        other_names: parsed.distractors.other_names,
    })?;
    Ok(lexicon)
}

/// Loads a lexicon from a path, or the bundled one when no path is given.
pub fn load_lexicon(path: Option<&Path>) -> Result<Lexicon, CliError> {
    match path {
        Some(path) => {
            let doc = fs::read_to_string(path)
                .map_err(|e| CliError::data(format!("read {}: {e}", path.display())))?;
            parse_lexicon(&doc)
        }
        None => parse_lexicon(BUNDLED_LEXICON_TOML),
    }
}

/// Writes the canonical serialization of a lexicon.
pub fn save_lexicon(lexicon: &Lexicon, path: &Path) -> Result<(), CliError> {
    fs::write(path, lexicon.canonical_document())
        .map_err(|e| CliError::data(format!("write {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_document_round_trips_byte_identically() {
        let lexicon = parse_lexicon(BUNDLED_LEXICON_TOML).unwrap();
        assert_eq!(lexicon.canonical_document(), BUNDLED_LEXICON_TOML);
        assert_eq!(lexicon, Lexicon::bundled());
    }

    #[test]
    fn invariant_violations_surface_with_context() {
        let doc = BUNDLED_LEXICON_TOML.replace("  \"Kevin\",\n", "");
        let err = parse_lexicon(&doc).unwrap_err();
        assert!(
            err.to_string()
                .contains("category names: expected 20, got 19"),
            "{err}"
        );
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn unknown_keys_rejected() {
        let doc = format!("{BUNDLED_LEXICON_TOML}\n[extra]\nkey = 1\n");
        assert!(parse_lexicon(&doc).is_err());
    }
}
