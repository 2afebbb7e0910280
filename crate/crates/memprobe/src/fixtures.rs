//! Scripted backend: exact fixture replay keyed by the SHA-256 of the
//! prompt. A miss is fatal by design -- it means prompt generation is not
//! deterministic, which is exactly what end-to-end tests use it to prove.
//!
//! Fixture files are JSON, either a single file or a directory of `.json`
//! files that get merged:
//!
//! ```json
//! {
//!   "distributions": [
//!     {"prompt": "...", "tokens": [{"text": " a", "logprob": -2.1},
//!                                  {"text": " Dublin", "prob": 0.067}]},
//!     {"prompt_sha256": "ab12...", "tokens": [...]}
//!   ],
//!   "tokenizer": [
//!     {"text": " trumpet", "tokens": [" trump", "et"]}
//!   ]
//! }
//! ```

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use memprobe_core::backend::{Backend, BackendError, TokenDistribution, TokenEntry, Truncation};

use crate::error::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FixtureFile {
    #[serde(default)]
    distributions: Vec<FixtureDistribution>,
    #[serde(default)]
    tokenizer: Vec<FixtureTokenization>,
}

#[derive(Debug, Deserialize)]
struct FixtureDistribution {
    prompt: Option<String>,
    prompt_sha256: Option<String>,
    tokens: Vec<FixtureToken>,
}

#[derive(Debug, Deserialize)]
struct FixtureToken {
    text: String,
    logprob: Option<f64>,
    prob: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct FixtureTokenization {
    text: String,
    tokens: Vec<String>,
}

fn sha256_hex(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub struct ScriptedBackend {
    distributions: HashMap<String, Vec<TokenEntry>>,
    tokenizer: Option<HashMap<String, Vec<String>>>,
    label: String,
}

impl ScriptedBackend {
    /// Loads one `.json` fixture file or every `.json` file in a
    /// directory.
    pub fn load(path: &Path) -> Result<ScriptedBackend, CliError> {
        let mut files = Vec::new();
        if path.is_dir() {
            let mut entries: Vec<_> = fs::read_dir(path)
                .map_err(|e| CliError::backend(format!("read fixtures {}: {e}", path.display())))?
                .filter_map(|e| e.ok())
                .map(|e| e.path())
                .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
                .collect();
            entries.sort();
            files.extend(entries);
        } else {
            files.push(path.to_path_buf());
        }
        if files.is_empty() {
            return Err(CliError::backend(format!(
                "no fixture files under {}",
                path.display()
            )));
        }
        let mut distributions = HashMap::new();
        let mut tokenizer: Option<HashMap<String, Vec<String>>> = None;
        for file in &files {
            let doc = fs::read_to_string(file)
                .map_err(|e| CliError::backend(format!("read {}: {e}", file.display())))?;
            let parsed: FixtureFile = serde_json::from_str(&doc)
                .map_err(|e| CliError::data(format!("fixture {}: {e}", file.display())))?;
            for dist in parsed.distributions {
                let key = match (&dist.prompt, &dist.prompt_sha256) {
                    (Some(prompt), None) => sha256_hex(prompt),
                    (None, Some(sha)) => sha.to_lowercase(),
                    _ => {
                        return Err(CliError::data(format!(
                            "fixture {}: each distribution needs exactly one of prompt / prompt_sha256",
                            file.display()
                        )));
                    }
                };
                let mut entries = Vec::with_capacity(dist.tokens.len());
                for token in dist.tokens {
                    let logprob = match (token.logprob, token.prob) {
                        (Some(lp), None) => lp,
                        (None, Some(p)) if p > 0.0 => p.ln(),
                        _ => {
                            return Err(CliError::data(format!(
                                "fixture {}: token {:?} needs logprob or a positive prob",
                                file.display(),
                                token.text
                            )));
                        }
                    };
                    entries.push(TokenEntry {
                        text: token.text,
                        logprob,
                    });
                }
                distributions.insert(key, entries);
            }
            if !parsed.tokenizer.is_empty() {
                let table = tokenizer.get_or_insert_with(HashMap::new);
                for entry in parsed.tokenizer {
                    table.insert(entry.text, entry.tokens);
                }
            }
        }
        Ok(ScriptedBackend {
            distributions,
            tokenizer,
            label: format!("scripted({})", path.display()),
        })
    }

    #[cfg(test)]
    pub fn from_parts(
        distributions: HashMap<String, Vec<TokenEntry>>,
        tokenizer: Option<HashMap<String, Vec<String>>>,
    ) -> ScriptedBackend {
        ScriptedBackend {
            distributions,
            tokenizer,
            label: "scripted(test)".into(),
        }
    }

    pub fn prompt_key(prompt: &str) -> String {
        sha256_hex(prompt)
    }
}

impl Backend for ScriptedBackend {
    fn next_token_distribution(
        &self,
        prompt: &str,
        top_k: usize,
    ) -> Result<TokenDistribution, BackendError> {
        if prompt.is_empty() {
            return Err(BackendError::EmptyPrompt);
        }
        if top_k == 0 {
            return Err(BackendError::InvalidTopK);
        }
        let key = sha256_hex(prompt);
        let entries = self
            .distributions
            .get(&key)
            .ok_or(BackendError::FixtureMiss {
                sha256: key.clone(),
            })?;
        // A fixture replays a top-k response; it never claims to be the
        // full vocabulary even when it is shorter than the request.
        let mut entries = entries.clone();
        entries.sort_by(|a, b| b.logprob.total_cmp(&a.logprob));
        entries.truncate(top_k);
        TokenDistribution::new(entries, Truncation::TopK(top_k))
    }

    fn tokenize(&self, text: &str) -> Result<Vec<String>, BackendError> {
        let table = self
            .tokenizer
            .as_ref()
            .ok_or_else(|| BackendError::TokenizerUnavailable {
                reason: "fixture set has no tokenizer table".into(),
            })?;
        table
            .get(text)
            .cloned()
            .ok_or_else(|| BackendError::TokenizeMiss {
                text: text.to_string(),
            })
    }

    fn describe(&self) -> String {
        self.label.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig2_backend() -> ScriptedBackend {
        let mut distributions = HashMap::new();
        distributions.insert(
            sha256_hex("Paul lives in"),
            vec![
                TokenEntry {
                    text: " a".into(),
                    logprob: 0.123f64.ln(),
                },
                TokenEntry {
                    text: " Dublin".into(),
                    logprob: 0.067f64.ln(),
                },
                TokenEntry {
                    text: " the".into(),
                    logprob: 0.043f64.ln(),
                },
                TokenEntry {
                    text: " Madrid".into(),
                    logprob: 0.032f64.ln(),
                },
            ],
        );
        ScriptedBackend::from_parts(distributions, None)
    }

    #[test]
    fn fixture_lookup_is_verbatim() {
        let backend = fig2_backend();
        let dist = backend
            .next_token_distribution("Paul lives in", 10)
            .unwrap();
        let texts: Vec<&str> = dist.entries().iter().map(|e| e.text.as_str()).collect();
        assert_eq!(texts, [" a", " Dublin", " the", " Madrid"]);
        assert!((dist.entries()[1].prob() - 0.067).abs() < 1e-12);
    }

    #[test]
    fn miss_is_fatal() {
        let backend = fig2_backend();
        assert!(matches!(
            backend.next_token_distribution("some other prompt", 10),
            Err(BackendError::FixtureMiss { .. })
        ));
    }

    #[test]
    fn tokenizer_requires_table() {
        let backend = fig2_backend();
        assert!(matches!(
            backend.tokenize(" Dublin"),
            Err(BackendError::TokenizerUnavailable { .. })
        ));
    }

    #[test]
    fn replay_records_the_requested_depth() {
        let backend = fig2_backend();
        let truncated = backend.next_token_distribution("Paul lives in", 3).unwrap();
        assert_eq!(truncated.truncation(), Truncation::TopK(3));
        assert_eq!(truncated.entries().len(), 3);
        let shallow_fixture = backend
            .next_token_distribution("Paul lives in", 10)
            .unwrap();
        assert_eq!(shallow_fixture.truncation(), Truncation::TopK(10));
        assert_eq!(shallow_fixture.entries().len(), 4);
    }
}
