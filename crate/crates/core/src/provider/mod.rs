//! Chat-completion providers.
//!
//! [`ChatProvider::send`] performs exactly one request. [`complete`] wraps it
//! with the per-attempt timeout, the overall deadline and the retry policy.

mod http;
mod mock;

use std::time::{Duration, Instant};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompt::PromptBundle;

pub use http::ChatCompletionsProvider;
pub use mock::{MockFallback, MockProvider, MockScript, ScriptedOutcome};

pub const ENV_BASE_URL: &str = "SG_LLM_BASE_URL";
pub const ENV_API_KEY: &str = "SG_LLM_API_KEY";
pub const ENV_MODEL: &str = "SG_LLM_MODEL";
pub const ENV_TIMEOUT_S: &str = "SG_LLM_TIMEOUT_S";

pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);
pub const DEFAULT_MAX_RETRIES: u32 = 2;
const DEFAULT_RETRY_BACKOFF: Duration = Duration::from_millis(100);
const MAX_RETRY_BACKOFF: Duration = Duration::from_secs(1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseKind {
    ToolCall,
    ContentText,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawProviderResponse {
    pub kind: ResponseKind,
    /// Tool-call argument string or assistant message text.
    pub payload: String,
    pub latency_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provider_request_id: Option<String>,
}

impl RawProviderResponse {
    pub fn tool_call(payload: impl Into<String>) -> Self {
        Self {
            kind: ResponseKind::ToolCall,
            payload: payload.into(),
            latency_ms: 0,
            provider_request_id: None,
        }
    }

    pub fn content_text(payload: impl Into<String>) -> Self {
        Self {
            kind: ResponseKind::ContentText,
            payload: payload.into(),
            latency_ms: 0,
            provider_request_id: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
#[serde(tag = "error", rename_all = "snake_case")]
pub enum ProviderError {
    #[error("provider request timed out")]
    Timeout,
    #[error("provider rejected the credentials")]
    AuthFailed,
    #[error("provider rate limit reached")]
    RateLimited {
        #[serde(default)]
        retry_after_s: Option<f64>,
    },
    #[error("transport failure: {message}")]
    Transport { message: String },
    #[error("provider server error (status {status})")]
    ServerError { status: u16 },
    #[error("provider rejected the request (status {status})")]
    ProviderRejected { status: u16, message: String },
    #[error("unexpected provider response: {message}")]
    BadResponse { message: String },
    #[error("provider configuration error: {message}")]
    Config { message: String },
}

impl ProviderError {
    pub fn transport(message: impl Into<String>) -> Self {
        ProviderError::Transport {
            message: message.into(),
        }
    }

    /// Transport-level failures, 429 and 5xx are retried; semantic 4xx and
    /// configuration problems are not.
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            ProviderError::Timeout
                | ProviderError::RateLimited { .. }
                | ProviderError::Transport { .. }
                | ProviderError::ServerError { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProviderConfig {
    pub base_url: String,
    /// Name of the environment variable holding the API key.
    pub api_key_ref: String,
    /// Overrides the task's model name when set.
    pub model_name: Option<String>,
    pub timeout: Duration,
    pub max_retries: u32,
    pub retry_backoff: Duration,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            base_url: DEFAULT_BASE_URL.to_owned(),
            api_key_ref: ENV_API_KEY.to_owned(),
            model_name: None,
            timeout: DEFAULT_TIMEOUT,
            max_retries: DEFAULT_MAX_RETRIES,
            retry_backoff: DEFAULT_RETRY_BACKOFF,
        }
    }
}

impl ProviderConfig {
    pub fn from_env() -> Result<Self, ProviderError> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup<F>(lookup: F) -> Result<Self, ProviderError>
    where
        F: Fn(&str) -> Option<String>,
    {
        let mut cfg = Self::default();
        if let Some(url) = lookup(ENV_BASE_URL).filter(|s| !s.trim().is_empty()) {
            cfg.base_url = url.trim_end_matches('/').to_owned();
        }
        cfg.model_name = lookup(ENV_MODEL).filter(|s| !s.trim().is_empty());
        if let Some(t) = lookup(ENV_TIMEOUT_S) {
            let secs: f64 = t.trim().parse().map_err(|_| ProviderError::Config {
                message: format!("{ENV_TIMEOUT_S} is not a number"),
            })?;
            if !secs.is_finite() || secs <= 0.0 {
                return Err(ProviderError::Config {
                    message: format!("{ENV_TIMEOUT_S} must be positive"),
                });
            }
            cfg.timeout = Duration::from_secs_f64(secs);
        }
        Ok(cfg)
    }

    /// Longest time [`complete`] may take.
    pub fn deadline(&self) -> Duration {
        self.timeout * (1 + self.max_retries)
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

#[async_trait]
pub trait ChatProvider: Send + Sync {
    /// Issues one request with no retries.
    async fn send(
        &self,
        bundle: &PromptBundle,
        config: &ProviderConfig,
    ) -> Result<RawProviderResponse, ProviderError>;

    fn name(&self) -> &str;
}

/// Sends `bundle` with retries. Returns within `config.deadline()` plus
/// scheduling slack.
pub async fn complete(
    provider: &dyn ChatProvider,
    bundle: &PromptBundle,
    config: &ProviderConfig,
) -> Result<RawProviderResponse, ProviderError> {
    let started = Instant::now();
    let deadline = started + config.deadline();
    let mut attempt = 0u32;
    loop {
        let now = Instant::now();
        if now >= deadline {
            return Err(ProviderError::Timeout);
        }
        let budget = config.timeout.min(deadline - now);
        let outcome = match tokio::time::timeout(budget, provider.send(bundle, config)).await {
            Ok(r) => r,
            Err(_) => Err(ProviderError::Timeout),
        };
        match outcome {
            Ok(mut resp) => {
                resp.latency_ms = started.elapsed().as_millis() as u64;
                return Ok(resp);
            }
            Err(err) if err.is_retryable() && attempt < config.max_retries => {
                attempt += 1;
                tracing::debug!(
                    provider = provider.name(),
                    task = %bundle.task_id,
                    attempt,
                    error = %err,
                    "retrying provider call"
                );
                let mut wait = config
                    .retry_backoff
                    .saturating_mul(1 << (attempt - 1).min(8))
                    .min(MAX_RETRY_BACKOFF);
                if let ProviderError::RateLimited {
                    retry_after_s: Some(s),
                } = err
                {
                    if s.is_finite() && s > 0.0 {
                        wait = wait.max(Duration::from_secs_f64(s.min(60.0)));
                    }
                }
                let remaining = deadline.saturating_duration_since(Instant::now());
                tokio::time::sleep(wait.min(remaining)).await;
            }
            Err(err) => return Err(err),
        }
    }
}
