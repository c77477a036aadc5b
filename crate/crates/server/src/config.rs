use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::Deserialize;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ServerConfig {
    #[serde(default = "default_listen")]
    pub listen: SocketAddr,
    /// May be left out when the command line names the metamodel.
    #[serde(default)]
    pub metamodel: PathBuf,
    /// Connecting to an unknown model id creates it.
    #[serde(default = "default_true")]
    pub auto_create: bool,
    /// One JSON snapshot per model; in-memory only when unset.
    #[serde(default)]
    pub persistence_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

fn default_listen() -> SocketAddr {
    SocketAddr::from(([127, 0, 0, 1], 8080))
}

fn default_true() -> bool {
    true
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

impl ServerConfig {
    pub fn new(metamodel: impl Into<PathBuf>) -> Self {
        ServerConfig {
            listen: default_listen(),
            metamodel: metamodel.into(),
            auto_create: true,
            persistence_dir: None,
            seed: 0,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Reads a config file; relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        let mut cfg = Self::from_toml(&text)
            .map_err(|e| ConfigError::Invalid { path: path.into(), message: e.message().to_string() })?;
        let base = path.parent().unwrap_or(Path::new("."));
        if !cfg.metamodel.as_os_str().is_empty() {
            cfg.metamodel = base.join(&cfg.metamodel);
        }
        if let Some(dir) = &cfg.persistence_dir {
            cfg.persistence_dir = Some(base.join(dir));
        }
        Ok(cfg)
    }
}
