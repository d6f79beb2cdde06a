//! Client for chat-completions compatible HTTP endpoints.

use async_trait::async_trait;
use reqwest::{header, StatusCode};
use serde_json::{json, Value};

use super::{ChatProvider, ProviderConfig, ProviderError, RawProviderResponse, ResponseKind};
use crate::prompt::PromptBundle;

#[derive(Debug, Clone, Default)]
pub struct ChatCompletionsProvider {
    client: reqwest::Client,
}

impl ChatCompletionsProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_client(client: reqwest::Client) -> Self {
        Self { client }
    }
}

/// Request body in the chat-completions shape.
pub fn request_body(bundle: &PromptBundle, config: &ProviderConfig) -> Value {
    let model = config
        .model_name
        .as_deref()
        .unwrap_or(&bundle.model_params.model_name);
    let tool_choice = if bundle.force_tool {
        json!({ "type": "function", "function": { "name": bundle.tool_spec.function_name } })
    } else {
        json!("auto")
    };
    json!({
        "model": model,
        "messages": [
            { "role": "system", "content": bundle.system_message },
            { "role": "user", "content": bundle.user_message },
        ],
        "temperature": bundle.model_params.temperature,
        "max_tokens": bundle.model_params.max_output_tokens,
        "tools": [ { "type": "function", "function": bundle.tool_spec.to_tool_function() } ],
        "tool_choice": tool_choice,
    })
}

/// Normalizes a successful chat-completions response body.
pub fn parse_response_body(body: &Value) -> Result<RawProviderResponse, ProviderError> {
    let message = body
        .pointer("/choices/0/message")
        .ok_or_else(|| ProviderError::BadResponse {
            message: "response has no choices[0].message".to_owned(),
        })?;
    let request_id = body.get("id").and_then(Value::as_str).map(str::to_owned);

    if let Some(args) = message
        .pointer("/tool_calls/0/function/arguments")
        .and_then(Value::as_str)
    {
        return Ok(RawProviderResponse {
            kind: ResponseKind::ToolCall,
            payload: args.to_owned(),
            latency_ms: 0,
            provider_request_id: request_id,
        });
    }
    match message.get("content").and_then(Value::as_str) {
        Some(text) => Ok(RawProviderResponse {
            kind: ResponseKind::ContentText,
            payload: text.to_owned(),
            latency_ms: 0,
            provider_request_id: request_id,
        }),
        None => Err(ProviderError::BadResponse {
            message: "message has neither tool_calls nor content".to_owned(),
        }),
    }
}

fn retry_after(headers: &header::HeaderMap) -> Option<f64> {
    headers
        .get(header::RETRY_AFTER)
        .and_then(|v| v.to_str().ok())
        .and_then(|s| s.trim().parse::<f64>().ok())
}

fn error_message(body: &str) -> String {
    serde_json::from_str::<Value>(body)
        .ok()
        .and_then(|v| {
            v.pointer("/error/message")
                .and_then(Value::as_str)
                .map(str::to_owned)
        })
        .unwrap_or_else(|| "request rejected".to_owned())
}

#[async_trait]
impl ChatProvider for ChatCompletionsProvider {
    async fn send(
        &self,
        bundle: &PromptBundle,
        config: &ProviderConfig,
    ) -> Result<RawProviderResponse, ProviderError> {
        let key = std::env::var(&config.api_key_ref)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| ProviderError::Config {
                message: format!("environment variable {} is not set", config.api_key_ref),
            })?;

        let resp = self
            .client
            .post(config.endpoint())
            .bearer_auth(key)
            .timeout(config.timeout)
            .json(&request_body(bundle, config))
            .send()
            .await
            .map_err(|e| {
                if e.is_timeout() {
                    ProviderError::Timeout
                } else {
                    ProviderError::transport(e.without_url().to_string())
                }
            })?;

        let status = resp.status();
        let header_request_id = resp
            .headers()
            .get("x-request-id")
            .and_then(|v| v.to_str().ok())
            .map(str::to_owned);
        let hint = retry_after(resp.headers());
        let text = resp.text().await.map_err(|e| {
            if e.is_timeout() {
                ProviderError::Timeout
            } else {
                ProviderError::transport(e.without_url().to_string())
            }
        })?;

        match status {
            s if s.is_success() => {
                let body: Value =
                    serde_json::from_str(&text).map_err(|e| ProviderError::BadResponse {
                        message: format!("response body is not JSON: {e}"),
                    })?;
                let mut raw = parse_response_body(&body)?;
                if raw.provider_request_id.is_none() {
                    raw.provider_request_id = header_request_id;
                }
                Ok(raw)
            }
            StatusCode::UNAUTHORIZED | StatusCode::FORBIDDEN => Err(ProviderError::AuthFailed),
            StatusCode::TOO_MANY_REQUESTS => Err(ProviderError::RateLimited {
                retry_after_s: hint,
            }),
            StatusCode::REQUEST_TIMEOUT => Err(ProviderError::Timeout),
            s if s.is_server_error() => Err(ProviderError::ServerError { status: s.as_u16() }),
            s => Err(ProviderError::ProviderRejected {
                status: s.as_u16(),
                message: error_message(&text),
            }),
        }
    }

    fn name(&self) -> &str {
        "chat-completions"
    }
}
