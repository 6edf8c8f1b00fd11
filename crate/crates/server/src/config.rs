//! Daemon configuration: a TOML file, then `KEYAUTH_*` environment
//! overrides, then validation.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

pub const DEFAULT_LISTEN: &str = "127.0.0.1:7450";
pub const DEFAULT_CHALLENGE_TTL: u64 = 120;
pub const DEFAULT_TOKEN_TTL: u64 = 900;
pub const DEFAULT_CHALLENGE_RATE_LIMIT: u32 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegistrationMode {
    /// Anyone may register a key for an identifier (trust on first use).
    Open,
    /// Registration requires the operator-issued registration token.
    Token,
}

impl FromStr for RegistrationMode {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "open" => Ok(Self::Open),
            "token" => Ok(Self::Token),
            other => Err(ConfigError::Invalid(format!(
                "registration mode must be \"open\" or \"token\", got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading config file {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("parsing config file {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("invalid value for {var}: {value:?}")]
    Env { var: &'static str, value: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub listen_address: SocketAddr,
    /// Holds the key registry. Never contains private key material.
    pub data_dir: PathBuf,
    pub challenge_ttl: u64,
    pub token_ttl: u64,
    pub registration_mode: RegistrationMode,
    pub registration_token: Option<String>,
    /// PEM file of the token-signing key; generated on first start.
    pub server_key_path: PathBuf,
    pub server_key_bits: u32,
    /// Challenges per client IP per minute; 0 disables the cap.
    pub challenge_rate_limit: u32,
}

/// On-disk form; every field optional so a file only lists what it changes.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    listen: Option<SocketAddr>,
    data_dir: Option<PathBuf>,
    challenge_ttl: Option<u64>,
    token_ttl: Option<u64>,
    registration_mode: Option<RegistrationMode>,
    registration_token: Option<String>,
    server_key_path: Option<PathBuf>,
    server_key_bits: Option<u32>,
    challenge_rate_limit: Option<u32>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        let data_root = dirs::data_local_dir().unwrap_or_else(|| PathBuf::from("."));
        let config_root = dirs::config_dir().unwrap_or_else(|| PathBuf::from("."));
        Self {
            listen_address: DEFAULT_LISTEN.parse().expect("valid default address"),
            data_dir: data_root.join("keyauthd"),
            challenge_ttl: DEFAULT_CHALLENGE_TTL,
            token_ttl: DEFAULT_TOKEN_TTL,
            registration_mode: RegistrationMode::Open,
            registration_token: None,
            server_key_path: config_root.join("keyauthd").join("server-key.pem"),
            server_key_bits: keyauth_core::crypto::DEFAULT_BITS,
            challenge_rate_limit: DEFAULT_CHALLENGE_RATE_LIMIT,
        }
    }
}

impl ServerConfig {
    /// Defaults, overlaid with `file` (if given), overlaid with the process
    /// environment.
    pub fn load(file: Option<&Path>) -> Result<Self, ConfigError> {
        Self::load_with_env(file, |var| std::env::var(var).ok())
    }

    pub fn load_with_env(
        file: Option<&Path>,
        env: impl Fn(&str) -> Option<String>,
    ) -> Result<Self, ConfigError> {
        let mut config = Self::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|source| ConfigError::Read { path: path.to_owned(), source })?;
            config.apply_file(&text, path)?;
        }
        config.apply_env(env)?;
        config.validate()?;
        Ok(config)
    }

    fn apply_file(&mut self, text: &str, path: &Path) -> Result<(), ConfigError> {
        let file: ConfigFile = toml::from_str(text)
            .map_err(|source| ConfigError::Parse { path: path.to_owned(), source })?;
        if let Some(v) = file.listen {
            self.listen_address = v;
        }
        if let Some(v) = file.data_dir {
            self.data_dir = v;
        }
        if let Some(v) = file.challenge_ttl {
            self.challenge_ttl = v;
        }
        if let Some(v) = file.token_ttl {
            self.token_ttl = v;
        }
        if let Some(v) = file.registration_mode {
            self.registration_mode = v;
        }
        if file.registration_token.is_some() {
            self.registration_token = file.registration_token;
        }
        if let Some(v) = file.server_key_path {
            self.server_key_path = v;
        }
        if let Some(v) = file.server_key_bits {
            self.server_key_bits = v;
        }
        if let Some(v) = file.challenge_rate_limit {
            self.challenge_rate_limit = v;
        }
        Ok(())
    }

    fn apply_env(&mut self, env: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        fn parsed<T: FromStr>(var: &'static str, value: String) -> Result<T, ConfigError> {
            value.trim().parse().map_err(|_| ConfigError::Env { var, value })
        }

        if let Some(v) = env("KEYAUTH_LISTEN") {
            self.listen_address = parsed("KEYAUTH_LISTEN", v)?;
        }
        if let Some(v) = env("KEYAUTH_DATA_DIR") {
            self.data_dir = PathBuf::from(v);
        }
        if let Some(v) = env("KEYAUTH_CHALLENGE_TTL") {
            self.challenge_ttl = parsed("KEYAUTH_CHALLENGE_TTL", v)?;
        }
        if let Some(v) = env("KEYAUTH_TOKEN_TTL") {
            self.token_ttl = parsed("KEYAUTH_TOKEN_TTL", v)?;
        }
        if let Some(v) = env("KEYAUTH_REG_MODE") {
            self.registration_mode = parsed("KEYAUTH_REG_MODE", v)?;
        }
        if let Some(v) = env("KEYAUTH_REG_TOKEN") {
            self.registration_token = Some(v);
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.challenge_ttl == 0 || self.token_ttl == 0 {
            return Err(ConfigError::Invalid("TTLs must be positive".into()));
        }
        if self.registration_mode == RegistrationMode::Token
            && self.registration_token.as_deref().map_or(true, str::is_empty)
        {
            return Err(ConfigError::Invalid(
                "registration_mode = \"token\" requires a non-empty registration_token".into(),
            ));
        }
        if !keyauth_core::crypto::ALLOWED_BITS.contains(&self.server_key_bits) {
            return Err(ConfigError::Invalid(format!(
                "server_key_bits must be 2048, 3072 or 4096, got {}",
                self.server_key_bits
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;

    fn env(pairs: &[(&str, &str)]) -> impl Fn(&str) -> Option<String> {
        let map: HashMap<String, String> =
            pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        move |k| map.get(k).cloned()
    }

    #[test]
    fn defaults() {
        let c = ServerConfig::load_with_env(None, env(&[])).unwrap();
        assert_eq!(c.challenge_ttl, 120);
        assert_eq!(c.token_ttl, 900);
        assert_eq!(c.registration_mode, RegistrationMode::Open);
        assert_eq!(c.challenge_rate_limit, 30);
        assert_eq!(c.listen_address.to_string(), "127.0.0.1:7450");
        assert!(!c.server_key_path.starts_with(&c.data_dir));
    }

    #[test]
    fn file_then_environment() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("keyauthd.toml");
        std::fs::write(
            &path,
            "listen = \"0.0.0.0:9000\"\nchallenge_ttl = 30\ntoken_ttl = 60\ndata_dir = \"/srv/ka\"\n",
        )
        .unwrap();
        let c = ServerConfig::load_with_env(
            Some(&path),
            env(&[("KEYAUTH_TOKEN_TTL", "61"), ("KEYAUTH_REG_MODE", "token"), ("KEYAUTH_REG_TOKEN", "s3")]),
        )
        .unwrap();
        assert_eq!(c.listen_address.port(), 9000);
        assert_eq!(c.challenge_ttl, 30);
        assert_eq!(c.token_ttl, 61);
        assert_eq!(c.data_dir, PathBuf::from("/srv/ka"));
        assert_eq!(c.registration_mode, RegistrationMode::Token);
        assert_eq!(c.registration_token.as_deref(), Some("s3"));
    }

    #[test]
    fn rejects_invalid_settings() {
        assert!(ServerConfig::load_with_env(None, env(&[("KEYAUTH_CHALLENGE_TTL", "0")])).is_err());
        assert!(ServerConfig::load_with_env(None, env(&[("KEYAUTH_TOKEN_TTL", "abc")])).is_err());
        assert!(ServerConfig::load_with_env(None, env(&[("KEYAUTH_REG_MODE", "token")])).is_err());
        assert!(ServerConfig::load_with_env(None, env(&[("KEYAUTH_REG_MODE", "closed")])).is_err());
    }

    #[test]
    fn unknown_file_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.toml");
        std::fs::write(&path, "chalenge_ttl = 5\n").unwrap();
        assert!(matches!(
            ServerConfig::load_with_env(Some(&path), env(&[])),
            Err(ConfigError::Parse { .. })
        ));
    }
}
