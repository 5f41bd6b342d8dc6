use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clsd_core::generator::GenerationConfig;
use clsd_core::textmetrics::BinSpec;
use clsd_providers::ProviderConfig;
use serde::{Deserialize, Serialize};

pub const CACHE_DIR_ENV: &str = "CLSD_CACHE_DIR";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<BinSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    /// When set, every `--out` must lie inside this directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

/// Contents of the `--config` JSON file. Secrets never appear here, only the
/// names of the environment variables that hold them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<ProviderConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chat: Option<ProviderConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translation: Option<ProviderConfig>,
    #[serde(default)]
    pub generation: GenerationConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub paths: PathsConfig,
}

/// A parsed config plus the raw bytes it was read from, for the run manifest.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub path: PathBuf,
    pub bytes: Vec<u8>,
}

impl RunConfig {
    /// Reads and validates a config file. Relative paths inside it are taken
    /// relative to the file's directory.
    pub fn load(path: &Path) -> Result<LoadedConfig> {
        let bytes = std::fs::read(path)
            .map_err(|e| clsd_core::Error::Io {
                path: path.to_path_buf(),
                source: e,
            })
            .with_context(|| "reading config")?;
        let mut config: RunConfig =
            serde_json::from_slice(&bytes).map_err(|e| clsd_core::Error::Parse {
                path: path.to_path_buf(),
                line: e.line(),
                message: e.to_string(),
            })?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut config.embedding,
            &mut config.chat,
            &mut config.translation,
        ]
        .into_iter()
        .flatten()
        {
            p.resolve_relative_to(base);
            p.validate()?;
        }
        for dir in [&mut config.paths.cache_dir, &mut config.paths.output_dir]
            .into_iter()
            .flatten()
        {
            if dir.is_relative() {
                *dir = base.join(&*dir);
            }
        }
        config.generation.params.check()?;
        Ok(LoadedConfig {
            config,
            path: path.to_path_buf(),
            bytes,
        })
    }

    /// `CLSD_CACHE_DIR` wins over the config file.
    pub fn cache_dir(&self) -> Option<PathBuf> {
        match std::env::var_os(CACHE_DIR_ENV) {
            Some(dir) if !dir.is_empty() => Some(PathBuf::from(dir)),
            _ => self.paths.cache_dir.clone(),
        }
    }

    pub fn require<'a>(
        section: &'a Option<ProviderConfig>,
        name: &str,
        path: &Path,
    ) -> Result<&'a ProviderConfig> {
        match section {
            Some(p) => Ok(p),
            None => Err(clsd_core::Error::InvalidInput(format!(
                "{} has no \"{name}\" provider section",
                path.display()
            ))
            .into()),
        }
    }

    /// Rejects outputs outside `paths.output_dir`, when that is configured.
    pub fn check_output(&self, out: &Path) -> Result<()> {
        let Some(dir) = &self.paths.output_dir else {
            return Ok(());
        };
        let abs = |p: &Path| -> Result<PathBuf> {
            Ok(if p.is_absolute() {
                p.to_path_buf()
            } else {
                std::env::current_dir()?.join(p)
            })
        };
        let (dir, out) = (normalize(&abs(dir)?), normalize(&abs(out)?));
        if !out.starts_with(&dir) {
            bail!(clsd_core::Error::InvalidInput(format!(
                "output {} is outside the configured output_dir {}",
                out.display(),
                dir.display()
            )));
        }
        Ok(())
    }
}

/// Lexically resolves `.` and `..` without touching the filesystem.
fn normalize(path: &Path) -> PathBuf {
    use std::path::Component;
    let mut out = PathBuf::new();
    for c in path.components() {
        match c {
            Component::CurDir => {}
            Component::ParentDir => {
                out.pop();
            }
            other => out.push(other),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, "{}").unwrap();
        let loaded = RunConfig::load(&path).unwrap();
        assert_eq!(loaded.config.generation.max_retries, 2);
        assert!(loaded.config.embedding.is_none());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"api_key": "sk-123"}"#).unwrap();
        assert!(RunConfig::load(&path).is_err());
    }

    #[test]
    fn output_dir_is_enforced() {
        let cfg = RunConfig {
            paths: PathsConfig {
                output_dir: Some("/runs/a".into()),
                ..Default::default()
            },
            ..Default::default()
        };
        assert!(cfg.check_output(Path::new("/runs/a/x.json")).is_ok());
        assert!(cfg.check_output(Path::new("/runs/a/../b/x.json")).is_err());
        assert!(RunConfig::default()
            .check_output(Path::new("/anywhere"))
            .is_ok());
    }
}
