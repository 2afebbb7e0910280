//! Experiment configuration: a TOML document layered over the catalog
//! defaults, itself overridable by CLI flags.

use std::fs;
use std::path::Path;

use serde::Deserialize;

use memprobe_core::backend::KernelConfig;
use memprobe_core::design::{ExperimentSpec, RelationKind, catalog_entry};

use crate::error::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub experiment: Option<String>,
    pub relation: Option<String>,
    pub relations: Option<Vec<String>>,
    pub list_lengths: Option<Vec<u8>>,
    pub seeds: Option<Vec<u64>>,
    pub permutations: Option<u32>,
    pub decay_grid: Option<Vec<u32>>,
    pub elaboration_positions: Option<Vec<u8>>,
    pub top_k: Option<usize>,
    pub parallel: Option<usize>,
    #[serde(default)]
    pub intervening: InterveningSection,
    #[serde(default)]
    pub kernel: KernelSection,
    #[serde(default)]
    pub wire: WireSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterveningSection {
    /// Append the default connective before the query (on by default).
    pub connective: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub preset: Option<String>,
    pub primacy_weight: Option<f64>,
    pub primacy_span: Option<u8>,
    pub recency_weight: Option<f64>,
    pub recency_span: Option<u8>,
    pub base_weight: Option<f64>,
    pub same_name_interference: Option<f64>,
    pub decay_per_hd: Option<f64>,
    pub formation_ramp: Option<u32>,
    pub temperature: Option<f64>,
    pub noise_seed: Option<u64>,
    pub elaboration_bonus: Option<f64>,
    pub query_match_weight: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireSection {
    pub endpoint: Option<String>,
    pub completion_path: Option<String>,
    pub tokenize_path: Option<String>,
    pub timeout_ms: Option<u64>,
    pub retries: Option<u32>,
    pub backoff_ms: Option<u64>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<ConfigFile, CliError> {
        let doc = fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("read config {}: {e}", path.display())))?;
        toml::from_str(&doc).map_err(|e| CliError::usage(format!("config parse: {e}")))
    }

    /// Builds the kernel configuration: preset (default neutral), then
    /// field-level overrides.
    pub fn kernel_config(&self, cli_preset: Option<&str>) -> Result<KernelConfig, CliError> {
        let preset_name = cli_preset.or(self.kernel.preset.as_deref());
        let mut config = match preset_name {
            Some(name) => KernelConfig::preset(name).ok_or_else(|| {
                CliError::usage(format!(
                    "unknown kernel preset {name:?}; available: {}",
                    KernelConfig::PRESET_NAMES.join(", ")
                ))
            })?,
            None => KernelConfig::u_curve(),
        };
        let k = &self.kernel;
        if let Some(v) = k.primacy_weight {
            config.primacy_weight = v;
        }
        if let Some(v) = k.primacy_span {
            config.primacy_span = v;
        }
        if let Some(v) = k.recency_weight {
            config.recency_weight = v;
        }
        if let Some(v) = k.recency_span {
            config.recency_span = v;
        }
        if let Some(v) = k.base_weight {
            config.base_weight = v;
        }
        if let Some(v) = k.same_name_interference {
            config.same_name_interference = v;
        }
        if let Some(v) = k.decay_per_hd {
            config.decay_per_hd = v;
        }
        if let Some(v) = k.formation_ramp {
            config.formation_ramp = v;
        }
        if let Some(v) = k.temperature {
            config.temperature = v;
        }
        if let Some(v) = k.noise_seed {
            config.noise_seed = v;
        }
        if let Some(v) = k.elaboration_bonus {
            config.elaboration_bonus = v;
        }
        if let Some(v) = k.query_match_weight {
            config.query_match_weight = v;
        }
        Ok(config)
    }
}

/// CLI-level overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct SpecOverrides {
    pub experiment: Option<String>,
    pub relation: Option<String>,
    pub list_lengths: Option<Vec<u8>>,
    pub seeds: Option<Vec<u64>>,
    pub permutations: Option<u32>,
}

fn parse_relation(s: &str) -> Result<RelationKind, CliError> {
    RelationKind::parse(s).ok_or_else(|| {
        CliError::usage(format!(
            "unknown relation {s:?}; use has_a, is_a or lives_in"
        ))
    })
}

/// Resolves the experiment to run: catalog defaults, then the config
/// file, then CLI flags.
pub fn resolve_spec(
    config: &ConfigFile,
    overrides: &SpecOverrides,
) -> Result<ExperimentSpec, CliError> {
    let id = overrides
        .experiment
        .clone()
        .or_else(|| config.experiment.clone())
        .ok_or_else(|| {
            CliError::usage("no experiment named; pass --experiment or a config file")
        })?;
    let mut spec = catalog_entry(&id).ok_or_else(|| {
        CliError::usage(format!(
            "unknown experiment {id:?}; run `memprobe catalog` for the list"
        ))
    })?;
    if let Some(relations) = &config.relations {
        spec.relations = relations
            .iter()
            .map(|r| parse_relation(r))
            .collect::<Result<_, _>>()?;
    }
    if let Some(relation) = &config.relation {
        spec.relations = vec![parse_relation(relation)?];
    }
    if let Some(lengths) = &config.list_lengths {
        spec.list_lengths = lengths.clone();
    }
    if let Some(seeds) = &config.seeds {
        spec.seeds = seeds.clone();
    }
    if let Some(permutations) = config.permutations {
        spec.permutations = permutations;
    }
    if let Some(grid) = &config.decay_grid {
        spec.decay_grid = grid.clone();
    }
    if let Some(positions) = &config.elaboration_positions {
        spec.elaboration_positions = positions.clone();
    }
    if let Some(connective) = config.intervening.connective {
        spec.connective = connective;
    }

    if let Some(relation) = &overrides.relation {
        spec.relations = vec![parse_relation(relation)?];
    }
    if let Some(lengths) = &overrides.list_lengths {
        spec.list_lengths = lengths.clone();
    }
    if let Some(seeds) = &overrides.seeds {
        spec.seeds = seeds.clone();
    }
    if let Some(permutations) = overrides.permutations {
        spec.permutations = permutations;
    }
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layering_catalog_config_cli() {
        let config: ConfigFile = toml::from_str(
            r#"
            experiment = "serial_position"
            relation = "lives_in"
            list_lengths = [10]
            permutations = 5

            [intervening]
            connective = false
            "#,
        )
        .unwrap();
        let overrides = SpecOverrides {
            relation: Some("has_a".into()),
            seeds: Some(vec![7]),
            ..SpecOverrides::default()
        };
        let spec = resolve_spec(&config, &overrides).unwrap();
        assert_eq!(spec.id, "serial_position");
        assert_eq!(spec.relations, vec![RelationKind::HasA]);
        assert_eq!(spec.list_lengths, vec![10]);
        assert_eq!(spec.seeds, vec![7]);
        assert_eq!(spec.permutations, 5);
        assert!(!spec.connective);
    }

    #[test]
    fn kernel_preset_with_overrides() {
        let config: ConfigFile = toml::from_str(
            r#"
            [kernel]
            preset = "flat"
            noise_seed = 99
            "#,
        )
        .unwrap();
        let kernel = config.kernel_config(None).unwrap();
        assert_eq!(kernel.primacy_weight, 0.0);
        assert_eq!(kernel.noise_seed, 99);
        // CLI preset wins over the file's preset.
        let kernel = config.kernel_config(Some("u_curve")).unwrap();
        assert!(kernel.primacy_weight > 0.0);
        assert_eq!(kernel.noise_seed, 99);
        assert!(config.kernel_config(Some("nope")).is_err());
    }

    #[test]
    fn missing_experiment_is_usage_error() {
        let err = resolve_spec(&ConfigFile::default(), &SpecOverrides::default()).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }
}
