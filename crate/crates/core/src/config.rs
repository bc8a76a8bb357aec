//! `queryforge.toml`: defaults for generation, the provider and subsetting.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::generator::GeneratorConfig;
use crate::provider::ProviderConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SubsetConfig {
    /// Api names kept in the subset regardless of the pruning rules.
    pub extra_keep: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub generation: GeneratorConfig,
    pub provider: ProviderConfig,
    pub subset: SubsetConfig,
}

#[derive(Debug, thiserror::Error)]
#[error("config {path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl Config {
    /// Load a config file; relative paths inside it resolve against its
    /// directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let err = |message: String| ConfigError {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let mut cfg: Config = toml::from_str(&text).map_err(|e| err(e.to_string()))?;
        cfg.provider.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::ProviderMode;

    #[test]
    fn defaults_and_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("queryforge.toml");
        std::fs::write(
            &p,
            "[generation]\nmax_attempts = 3\n[provider]\nmode = \"scripted\"\ntranscript = \"t.jsonl\"\n[subset]\nextra_keep = [\"size\"]\n",
        )
        .unwrap();
        let c = Config::load(&p).unwrap();
        assert_eq!(c.generation.max_attempts, 3);
        assert_eq!(c.generation.pass_budget, 5);
        assert_eq!(c.provider.mode, ProviderMode::Scripted);
        assert_eq!(c.provider.transcript.unwrap(), dir.path().join("t.jsonl"));
        assert_eq!(c.provider.temperature, 0.2);
        assert_eq!(c.subset.extra_keep, vec!["size".to_string()]);
    }

    #[test]
    fn bad_toml_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.toml");
        std::fs::write(&p, "[generation\n").unwrap();
        assert!(Config::load(&p).is_err());
    }
}
