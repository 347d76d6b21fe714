//! Policy configuration loaded from TOML.

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::message::Role;
use crate::policy::PolicyError;
use crate::scripted::ScriptedRule;

pub const MAX_RETRY_LIMIT: u32 = 5;

fn default_temperature() -> f64 {
    1.0
}
fn default_max_turn_tokens() -> u32 {
    1024
}
fn default_timeout_secs() -> f64 {
    120.0
}
fn default_retry_limit() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    250
}
fn default_max_in_flight() -> usize {
    8
}
fn default_observation_role() -> Role {
    Role::Tool
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub endpoint_url: String,
    pub model_name: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_turn_tokens")]
    pub max_turn_tokens: u32,
    #[serde(default = "default_timeout_secs")]
    pub request_timeout_secs: f64,
    #[serde(default = "default_retry_limit")]
    pub retry_limit: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_base_ms: u64,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    /// Environment variable holding a bearer token, if the endpoint needs one.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub system_prompt: Option<String>,
    /// Role used for tool observations; some servers only accept `user`.
    #[serde(default = "default_observation_role")]
    pub observation_role: Role,
}

impl PolicyConfig {
    pub fn new(endpoint_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        PolicyConfig {
            endpoint_url: endpoint_url.into(),
            model_name: model_name.into(),
            temperature: default_temperature(),
            max_turn_tokens: default_max_turn_tokens(),
            request_timeout_secs: default_timeout_secs(),
            retry_limit: default_retry_limit(),
            backoff_base_ms: default_backoff_ms(),
            max_in_flight: default_max_in_flight(),
            api_key_env: None,
            system_prompt: None,
            observation_role: default_observation_role(),
        }
    }

    pub fn request_timeout(&self) -> Duration {
        Duration::from_secs_f64(self.request_timeout_secs)
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let bad = |m: String| Err(PolicyError::InvalidConfig(m));
        if reqwest::Url::parse(&self.endpoint_url).is_err() {
            return bad(format!("endpoint_url {:?} is not a URL", self.endpoint_url));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return bad(format!("temperature must be ≥ 0, got {}", self.temperature));
        }
        if self.max_turn_tokens == 0 {
            return bad("max_turn_tokens must be positive".into());
        }
        if !(self.request_timeout_secs.is_finite() && self.request_timeout_secs > 0.0) {
            return bad(format!("request_timeout_secs must be > 0, got {}", self.request_timeout_secs));
        }
        if self.retry_limit > MAX_RETRY_LIMIT {
            return bad(format!("retry_limit must be ≤ {MAX_RETRY_LIMIT}, got {}", self.retry_limit));
        }
        if self.max_in_flight == 0 {
            return bad("max_in_flight must be ≥ 1".into());
        }
        if matches!(self.observation_role, Role::System | Role::Assistant) {
            return bad("observation_role must be tool or user".into());
        }
        Ok(())
    }
}

/// Contents of a `--policy` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PolicyFile {
    Http(PolicyConfig),
    Scripted { rules: Vec<ScriptedRule> },
}

impl PolicyFile {
    pub fn from_toml(text: &str) -> Result<Self, PolicyError> {
        let file: PolicyFile =
            toml::from_str(text).map_err(|e| PolicyError::InvalidConfig(e.to_string()))?;
        match &file {
            PolicyFile::Http(cfg) => cfg.validate()?,
            PolicyFile::Scripted { rules } => {
                if rules.is_empty() {
                    return Err(PolicyError::InvalidConfig("scripted policy needs at least one rule".into()));
                }
                for r in rules {
                    r.validate()?;
                }
            }
        }
        Ok(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PolicyError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| PolicyError::InvalidConfig(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }
}
