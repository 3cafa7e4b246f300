//! TOML run configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::gateway::HttpConfig;
use crate::persona::{SamplingParams, DEFAULT_PASSAGES};
use crate::retry::RetryPolicy;
use crate::scaffold::RemoteScorerConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config value: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabConfig {
    /// Chat-completions base URL, e.g. `https://api.openai.com/v1`.
    pub base_url: Option<String>,
    pub model: Option<String>,
    /// Simultaneous in-flight completions.
    pub concurrency: usize,
    /// Attempts per request, including the first.
    pub retries: u32,
    pub timeout_secs: u64,
    pub backoff_ms: u64,
    pub k_passages: usize,
    pub ridge_lambda: f64,
    pub scorer_url: Option<String>,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub seed: Option<u64>,
}

impl Default for LabConfig {
    fn default() -> Self {
        let s = SamplingParams::default();
        let r = RetryPolicy::default();
        LabConfig {
            base_url: None,
            model: None,
            concurrency: 8,
            retries: r.max_attempts,
            timeout_secs: 60,
            backoff_ms: r.base_delay_ms,
            k_passages: DEFAULT_PASSAGES,
            ridge_lambda: 1.0,
            scorer_url: None,
            temperature: s.temperature,
            top_p: s.top_p,
            max_tokens: s.max_tokens,
            seed: s.seed,
        }
    }
}

impl LabConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: LabConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.concurrency == 0 {
            return bad("concurrency must be at least 1".into());
        }
        if self.retries == 0 {
            return bad("retries must be at least 1".into());
        }
        if self.timeout_secs == 0 {
            return bad("timeout_secs must be positive".into());
        }
        if self.k_passages == 0 {
            return bad("k_passages must be at least 1".into());
        }
        if !(self.ridge_lambda >= 0.0 && self.ridge_lambda.is_finite()) {
            return bad(format!("ridge_lambda {} must be finite and >= 0", self.ridge_lambda));
        }
        self.sampling().validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn sampling(&self) -> SamplingParams {
        SamplingParams { temperature: self.temperature, top_p: self.top_p, max_tokens: self.max_tokens, seed: self.seed }
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy { max_attempts: self.retries, base_delay_ms: self.backoff_ms, ..RetryPolicy::default() }
    }

    /// HTTP backend settings; the key comes from the environment.
    pub fn http(&self) -> Result<HttpConfig> {
        let (Some(base_url), Some(model)) = (&self.base_url, &self.model) else {
            return Err(ConfigError::Invalid("the http backend needs base_url and model".into()));
        };
        let mut cfg = HttpConfig::new(base_url.clone(), model.clone()).with_env_key();
        cfg.timeout_secs = self.timeout_secs;
        cfg.retry = self.retry_policy();
        cfg.max_in_flight = self.concurrency;
        Ok(cfg)
    }

    pub fn remote_scorer(&self) -> Result<RemoteScorerConfig> {
        let url = self.scorer_url.as_ref().ok_or_else(|| ConfigError::Invalid("the remote scorer needs scorer_url".into()))?;
        let mut cfg = RemoteScorerConfig::new(url.clone());
        cfg.timeout_secs = self.timeout_secs;
        cfg.retry = self.retry_policy();
        cfg.max_in_flight = self.concurrency;
        Ok(cfg)
    }
}
