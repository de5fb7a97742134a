use std::path::{Path, PathBuf};

use lens_core::explain::{BackendConfig, BackendKind};
use serde::{Deserialize, Serialize};

pub const DEFAULT_PORT: u16 = 7411;

/// Service configuration: a TOML file, then `LENS_*` environment overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub host: String,
    pub port: u16,
    pub store_dir: PathBuf,
    pub backend: BackendConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            host: "127.0.0.1".into(),
            port: DEFAULT_PORT,
            store_dir: PathBuf::from("lens-store"),
            backend: BackendConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path:?}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad config {path:?}: {source}")]
    Toml {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("bad value for {var}: {value:?}")]
    Env { var: &'static str, value: String },
}

fn parse<T: std::str::FromStr>(var: &'static str, value: String) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::Env { var, value })
}

impl ServiceConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|source| ConfigError::Toml {
            path: path.to_path_buf(),
            source,
        })
    }

    /// The file (if any) with the process environment applied on top.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut config = match path {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        config.apply_env(|k| std::env::var(k).ok())?;
        Ok(config)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(v) = get("LENS_HOST") {
            self.host = v;
        }
        if let Some(v) = get("LENS_PORT") {
            self.port = parse("LENS_PORT", v)?;
        }
        if let Some(v) = get("LENS_STORE_DIR") {
            self.store_dir = v.into();
        }
        if let Some(v) = get("LENS_BACKEND") {
            self.backend.backend = match v.as_str() {
                "template" => BackendKind::Template,
                "remote" => BackendKind::Remote,
                _ => {
                    return Err(ConfigError::Env {
                        var: "LENS_BACKEND",
                        value: v,
                    })
                }
            };
        }
        if let Some(v) = get("LENS_ENDPOINT") {
            self.backend.endpoint = Some(v);
        }
        if let Some(v) = get("LENS_MODEL") {
            self.backend.model = Some(v);
        }
        if let Some(v) = get("LENS_BUDGET") {
            self.backend.budget = parse("LENS_BUDGET", v)?;
        }
        if let Some(v) = get("LENS_MAX_REPAIRS") {
            self.backend.max_repairs = parse("LENS_MAX_REPAIRS", v)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn env_overrides_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lens.toml");
        std::fs::write(
            &path,
            "port = 9000\nstore_dir = \"/data\"\n[backend]\nmax_repairs = 5\n",
        )
        .unwrap();
        let mut config = ServiceConfig::from_file(&path).unwrap();
        assert_eq!(config.port, 9000);
        assert_eq!(config.backend.max_repairs, 5);
        assert_eq!(config.backend.budget, lens_core::explain::DEFAULT_BUDGET);

        let env: HashMap<&str, &str> = [("LENS_PORT", "9100"), ("LENS_BACKEND", "remote")].into();
        config
            .apply_env(|k| env.get(k).map(|v| v.to_string()))
            .unwrap();
        assert_eq!(config.port, 9100);
        assert_eq!(config.store_dir, PathBuf::from("/data"));
        assert_eq!(config.backend.backend, BackendKind::Remote);
    }

    #[test]
    fn bad_env_value_is_rejected() {
        let mut config = ServiceConfig::default();
        let err = config
            .apply_env(|k| (k == "LENS_PORT").then(|| "eighty".to_string()))
            .unwrap_err();
        assert!(matches!(
            err,
            ConfigError::Env {
                var: "LENS_PORT",
                ..
            }
        ));
    }

    #[test]
    fn mistyped_value_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lens.toml");
        std::fs::write(&path, "port = \"x\"\n").unwrap();
        assert!(matches!(
            ServiceConfig::from_file(&path),
            Err(ConfigError::Toml { .. })
        ));
    }
}
