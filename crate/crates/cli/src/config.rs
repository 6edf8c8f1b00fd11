//! Agent configuration: an optional TOML file plus `KEYAUTH_*` overrides.

use std::path::{Path, PathBuf};

use serde::Deserialize;

pub const KEYSTORE_FILE: &str = "identity.kskey";
pub const CONFIG_FILE: &str = "agent.toml";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentConfig {
    pub keystore_path: PathBuf,
    pub default_server_url: Option<String>,
    /// Skip the approval prompt. Only ever true when set explicitly.
    pub auto_approve: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("no config directory on this platform; pass --keystore")]
    NoConfigDir,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    keystore: Option<PathBuf>,
    server: Option<String>,
    #[serde(default)]
    auto_approve: bool,
}

/// `<config dir>/keyauth`, e.g. `~/.config/keyauth` on Linux.
pub fn config_dir() -> Option<PathBuf> {
    dirs::config_dir().map(|d| d.join("keyauth"))
}

impl AgentConfig {
    pub fn with_keystore(path: impl Into<PathBuf>) -> Self {
        Self { keystore_path: path.into(), default_server_url: None, auto_approve: false }
    }

    /// Reads `file` if given, else the default config file when it exists,
    /// then applies `KEYAUTH_KEYSTORE` and `KEYAUTH_SERVER`.
    pub fn load(file: Option<&Path>) -> Result<Self, ConfigError> {
        Self::load_with_env(file, |k| std::env::var(k).ok())
    }

    pub fn load_with_env(
        file: Option<&Path>,
        env: impl Fn(&str) -> Option<String>,
    ) -> Result<Self, ConfigError> {
        let default_file = config_dir().map(|d| d.join(CONFIG_FILE));
        let parsed = match file.map(Path::to_path_buf).or(default_file.filter(|p| p.exists())) {
            Some(path) => {
                let text = std::fs::read_to_string(&path)
                    .map_err(|source| ConfigError::Read { path: path.clone(), source })?;
                toml::from_str(&text).map_err(|source| ConfigError::Parse { path, source })?
            }
            None => FileConfig::default(),
        };

        let keystore_path = match env("KEYAUTH_KEYSTORE").map(PathBuf::from).or(parsed.keystore) {
            Some(p) => p,
            None => config_dir().ok_or(ConfigError::NoConfigDir)?.join(KEYSTORE_FILE),
        };
        Ok(Self {
            keystore_path,
            default_server_url: env("KEYAUTH_SERVER").or(parsed.server),
            auto_approve: parsed.auto_approve,
        })
    }
}
