//! Service configuration: a TOML file plus `SWEEPER_*` environment overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sweeper_core::backends::{BackendConfig, ENV_BACKEND_URL, ENV_MOCK};

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_LONG_POLL_S: f64 = 60.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: String,
    pub port: u16,
    pub session_dir: PathBuf,
    /// Ceiling for a long-polled question before answering 202.
    pub long_poll_s: f64,
    /// Allowed frontend origins; empty allows any.
    pub cors_origins: Vec<String>,
    /// Frozen clock and counter nonces, for reproducible session ids.
    pub deterministic: bool,
    pub save_views: bool,
    pub backend: BackendConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1".into(),
            port: DEFAULT_PORT,
            session_dir: PathBuf::from("sessions"),
            long_poll_s: DEFAULT_LONG_POLL_S,
            cors_origins: Vec::new(),
            deterministic: false,
            save_views: true,
            backend: BackendConfig::Mock,
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        let c: Self = toml::from_str(text).map_err(|e| e.to_string())?;
        c.validate()?;
        Ok(c)
    }

    /// Reads `path` (defaults when `None`) and applies the process environment.
    pub fn load(path: Option<&Path>) -> Result<Self, String> {
        let mut c = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
                Self::from_toml(&text).map_err(|e| format!("{}: {e}", p.display()))?
            }
            None => Self::default(),
        };
        c.apply_env(|k| std::env::var(k).ok())?;
        Ok(c)
    }

    /// `SWEEPER_BIND`, `SWEEPER_PORT`, `SWEEPER_SESSION_DIR`,
    /// `SWEEPER_LONG_POLL_S`, then the backend variables, where
    /// `SWEEPER_MOCK=1` wins over `SWEEPER_BACKEND_URL`.
    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) -> Result<(), String> {
        let var = |k: &str| var(k).filter(|v| !v.is_empty());
        if let Some(v) = var("SWEEPER_BIND") {
            self.bind = v;
        }
        if let Some(v) = var("SWEEPER_PORT") {
            self.port = v.parse().map_err(|_| format!("SWEEPER_PORT: not a port: {v}"))?;
        }
        if let Some(v) = var("SWEEPER_SESSION_DIR") {
            self.session_dir = v.into();
        }
        if let Some(v) = var("SWEEPER_LONG_POLL_S") {
            self.long_poll_s = v.parse().map_err(|_| format!("SWEEPER_LONG_POLL_S: not a number: {v}"))?;
        }
        if var(ENV_MOCK).is_some_and(|v| v == "1" || v.eq_ignore_ascii_case("true")) {
            self.backend = BackendConfig::Mock;
        } else if let Some(url) = var(ENV_BACKEND_URL) {
            self.backend = BackendConfig::remote(&url);
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.long_poll_s > 0.0) {
            return Err("long_poll_s must be positive".into());
        }
        self.backend.validate()
    }
}
