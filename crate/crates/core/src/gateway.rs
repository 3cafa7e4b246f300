//! Completion backends: an OpenAI-compatible HTTP chat client and a
//! deterministic scripted stand-in.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::foundation::{round_half_away, Foundation, PerFoundation};
use crate::instruments::{InstrumentItem, ItemKey, Part};
use crate::persona::SamplingParams;
use crate::retry::{self, Admission, Attempt, RetryPolicy};

pub const API_KEY_ENV: &str = "PERSONA_LAB_API_KEY";
pub const SCRIPTED_MODEL_ID: &str = "scripted";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GatewayError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("authentication rejected: {0}")]
    AuthError(String),
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("malformed completion response: {0}")]
    MalformedResponse(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("backend not configured: {0}")]
    NotConfigured(String),
}

pub type Result<T> = std::result::Result<T, GatewayError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Http,
    Scripted,
}

impl std::str::FromStr for BackendKind {
    type Err = GatewayError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "http" => Ok(BackendKind::Http),
            "scripted" => Ok(BackendKind::Scripted),
            other => Err(GatewayError::NotConfigured(format!("unknown backend {other:?}"))),
        }
    }
}

/// Prompting condition for the dilemma task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    TraitIsolated,
    IntegratedTrait,
    NotApplicable,
}

impl std::str::FromStr for Condition {
    type Err = GatewayError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "isolated" | "trait_isolated" => Ok(Condition::TraitIsolated),
            "integrated" | "integrated_trait" => Ok(Condition::IntegratedTrait),
            "none" | "not_applicable" => Ok(Condition::NotApplicable),
            other => Err(GatewayError::InvalidRequest(format!("unknown condition {other:?}"))),
        }
    }
}

/// What the scripted backend needs to answer without reading the prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptCue {
    pub subject_id: String,
    pub item: InstrumentItem,
    pub condition: Condition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub system_prompt: String,
    pub user_message: String,
    pub sampling: SamplingParams,
    pub backend: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cue: Option<ScriptCue>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub text: String,
    pub latency_ms: u64,
    pub attempt_count: u32,
    pub model_id: String,
}

pub trait CompletionBackend: Send + Sync {
    fn kind(&self) -> BackendKind;

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult>;
}

fn check_request(backend: BackendKind, request: &CompletionRequest) -> Result<()> {
    if request.backend != backend {
        return Err(GatewayError::InvalidRequest(format!(
            "request targets {:?} but backend is {:?}",
            request.backend, backend
        )));
    }
    request.sampling.validate().map_err(|e| GatewayError::InvalidRequest(e.to_string()))
}

/// Run a batch through `backend` on at most `workers` threads; results
/// line up with `requests`.
pub fn complete_batch(backend: &dyn CompletionBackend, requests: &[CompletionRequest], workers: usize) -> Vec<Result<CompletionResult>> {
    retry::bounded_map(requests, workers, |r| backend.complete(r))
}

fn clamp_round(x: f64, lo: i64, hi: i64) -> i64 {
    (round_half_away(x) as i64).clamp(lo, hi)
}

fn overall_mean(means: &PerFoundation<f64>) -> f64 {
    means.iter().map(|(_, v)| *v).sum::<f64>() / 5.0
}

/// Deterministic rating for one item given per-foundation means on 0-10.
pub fn scripted_rating(means: &PerFoundation<f64>, item: &InstrumentItem, condition: Condition) -> i64 {
    match item.part {
        Part::Dilemma => {
            let s = match (condition, item.foundation.and_then(ItemKey::foundation)) {
                (Condition::TraitIsolated, Some(f)) => means[f],
                _ => overall_mean(means),
            };
            clamp_round(6.0 - s / 2.0, 1, 6)
        }
        Part::Relevance | Part::Agreement => match item.foundation {
            Some(ItemKey::Catch) if item.part == Part::Relevance => 0,
            Some(ItemKey::Catch) => 5,
            Some(k) => {
                let f: Foundation = k.foundation().expect("non-catch key");
                clamp_round(means[f] / 2.0, 0, 5)
            }
            None => clamp_round(overall_mean(means) / 2.0, 0, 5),
        },
    }
}

pub fn scripted_response(means: &PerFoundation<f64>, item: &InstrumentItem, condition: Condition) -> String {
    format!("Response: ({})\nRationale: scripted.", scripted_rating(means, item, condition))
}

/// Offline backend answering from bound profile means.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    profiles: BTreeMap<String, PerFoundation<f64>>,
}

impl ScriptedBackend {
    pub fn new(profiles: BTreeMap<String, PerFoundation<f64>>) -> Self {
        ScriptedBackend { profiles }
    }

    pub fn bind(&mut self, subject_id: impl Into<String>, means: PerFoundation<f64>) {
        self.profiles.insert(subject_id.into(), means);
    }
}

impl CompletionBackend for ScriptedBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Scripted
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult> {
        check_request(BackendKind::Scripted, request)?;
        let cue = request
            .cue
            .as_ref()
            .ok_or_else(|| GatewayError::InvalidRequest("scripted request without a cue".into()))?;
        let means = self
            .profiles
            .get(&cue.subject_id)
            .ok_or_else(|| GatewayError::NotConfigured(format!("no profile bound for {}", cue.subject_id)))?;
        Ok(CompletionResult {
            text: scripted_response(means, &cue.item, cue.condition),
            latency_ms: 0,
            attempt_count: 1,
            model_id: SCRIPTED_MODEL_ID.into(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpConfig {
    pub base_url: String,
    pub model: String,
    #[serde(skip)]
    pub api_key: Option<String>,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
    pub max_in_flight: usize,
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        HttpConfig {
            base_url: base_url.into(),
            model: model.into(),
            api_key: None,
            timeout_secs: 60,
            retry: RetryPolicy::default(),
            max_in_flight: 8,
        }
    }

    /// Pick up the credential from `PERSONA_LAB_API_KEY`.
    pub fn with_env_key(mut self) -> Self {
        self.api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.trim().is_empty());
        self
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 2],
    temperature: f64,
    top_p: f64,
    max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct ChatResponse {
    #[serde(default)]
    model: Option<String>,
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatReply,
}

#[derive(Deserialize)]
struct ChatReply {
    content: Option<String>,
}

/// Extract the first choice's content and the reported model from a chat
/// completions response body.
pub fn parse_chat_response(body: &str) -> Result<(String, Option<String>)> {
    let resp: ChatResponse = serde_json::from_str(body).map_err(|e| GatewayError::MalformedResponse(e.to_string()))?;
    let choice = resp.choices.into_iter().next().ok_or_else(|| GatewayError::MalformedResponse("no choices".into()))?;
    let text = choice.message.content.ok_or_else(|| GatewayError::MalformedResponse("choice has no content".into()))?;
    Ok((text, resp.model))
}

pub struct HttpBackend {
    config: HttpConfig,
    client: reqwest::blocking::Client,
    gate: Admission,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self> {
        if config.base_url.trim().is_empty() {
            return Err(GatewayError::NotConfigured("base_url is empty".into()));
        }
        if config.model.trim().is_empty() {
            return Err(GatewayError::NotConfigured("model is empty".into()));
        }
        if config.api_key.is_none() {
            log::warn!("no API key set; sending unauthenticated requests");
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| GatewayError::NotConfigured(e.to_string()))?;
        let gate = Admission::new(config.max_in_flight);
        Ok(HttpBackend { config, client, gate })
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    /// Highest number of requests observed in flight at once.
    pub fn peak_in_flight(&self) -> usize {
        self.gate.peak()
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }
}

impl CompletionBackend for HttpBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Http
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult> {
        check_request(BackendKind::Http, request)?;
        let body = serde_json::to_string(&ChatRequest {
            model: &self.config.model,
            messages: [
                ChatMessage { role: "system", content: &request.system_prompt },
                ChatMessage { role: "user", content: &request.user_message },
            ],
            temperature: request.sampling.temperature,
            top_p: request.sampling.top_p,
            max_tokens: request.sampling.max_tokens,
            seed: request.sampling.seed,
        })
        .map_err(|e| GatewayError::InvalidRequest(e.to_string()))?;
        let url = self.endpoint();
        let _permit = self.gate.acquire();
        let started = Instant::now();
        let outcome = retry::retry(&self.config.retry, |attempt| {
            let mut req = self.client.post(&url).header(reqwest::header::CONTENT_TYPE, "application/json").body(body.clone());
            if let Some(key) = &self.config.api_key {
                req = req.bearer_auth(key);
            }
            let resp = match req.send() {
                Ok(r) => r,
                Err(e) => return Attempt::Retry(GatewayError::BackendUnavailable(e.to_string())),
            };
            let status = resp.status();
            match status.as_u16() {
                401 | 403 => return Attempt::Fail(GatewayError::AuthError(format!("HTTP {status}"))),
                429 => return Attempt::Retry(GatewayError::RateLimited { attempts: attempt }),
                _ if status.is_server_error() => {
                    return Attempt::Retry(GatewayError::BackendUnavailable(format!("HTTP {status}")))
                }
                _ if !status.is_success() => {
                    let detail = resp.text().unwrap_or_default();
                    return Attempt::Fail(GatewayError::InvalidRequest(format!("HTTP {status}: {detail}")));
                }
                _ => {}
            }
            match resp.text() {
                Ok(text) => match parse_chat_response(&text) {
                    Ok(parsed) => Attempt::Done(parsed),
                    Err(e) => Attempt::Fail(e),
                },
                Err(e) => Attempt::Retry(GatewayError::BackendUnavailable(e.to_string())),
            }
        });
        match outcome {
            Ok(((text, model), attempt_count)) => Ok(CompletionResult {
                text,
                latency_ms: started.elapsed().as_millis() as u64,
                attempt_count,
                model_id: model.unwrap_or_else(|| self.config.model.clone()),
            }),
            Err((GatewayError::RateLimited { .. }, attempts)) => Err(GatewayError::RateLimited { attempts }),
            Err((e, _)) => Err(e),
        }
    }
}
