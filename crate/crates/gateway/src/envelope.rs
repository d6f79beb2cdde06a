//! The error envelope every failed request answers with.

use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use smart_suggest_core::{ParseError, PromptError, ProviderError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    ValidationFailed,
    UnknownTask,
    ProviderUnavailable,
    MalformedResponse,
    RateLimited,
    Internal,
}

impl ErrorKind {
    pub fn status(self) -> StatusCode {
        match self {
            ErrorKind::ValidationFailed => StatusCode::BAD_REQUEST,
            ErrorKind::UnknownTask => StatusCode::NOT_FOUND,
            ErrorKind::ProviderUnavailable => StatusCode::SERVICE_UNAVAILABLE,
            ErrorKind::MalformedResponse => StatusCode::BAD_GATEWAY,
            ErrorKind::RateLimited => StatusCode::TOO_MANY_REQUESTS,
            ErrorKind::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorEnvelope {
    pub error_kind: ErrorKind,
    pub message: String,
    pub recoverable: bool,
    /// Seconds to wait before retrying.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retry_hint: Option<f64>,
    /// Id of the failed attempt; regenerating it retries the same request.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result_id: Option<Uuid>,
}

impl ErrorEnvelope {
    pub fn new(error_kind: ErrorKind, message: impl Into<String>) -> Self {
        let recoverable = matches!(
            error_kind,
            ErrorKind::ProviderUnavailable | ErrorKind::MalformedResponse | ErrorKind::RateLimited
        );
        Self {
            error_kind,
            message: message.into(),
            recoverable,
            retry_hint: None,
            result_id: None,
        }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::ValidationFailed, message)
    }

    pub fn internal() -> Self {
        Self::new(
            ErrorKind::Internal,
            "The suggestion service hit an internal problem. The form can still be filled in manually.",
        )
    }

    pub fn with_retry_hint(mut self, seconds: f64) -> Self {
        self.retry_hint = Some(seconds);
        self
    }

    pub fn with_result_id(mut self, id: Uuid) -> Self {
        self.result_id = Some(id);
        self
    }

    /// Provider failures never carry the provider's own message, which may
    /// echo request content.
    pub fn from_provider(err: &ProviderError) -> Self {
        match err {
            ProviderError::RateLimited { retry_after_s } => {
                let mut env = Self::new(
                    ErrorKind::RateLimited,
                    "The language model is busy right now. Please try again shortly.",
                );
                env.retry_hint = *retry_after_s;
                env
            }
            ProviderError::BadResponse { .. } => Self::new(
                ErrorKind::MalformedResponse,
                "The language model returned a response that could not be read. Try reloading the suggestions.",
            ),
            _ => Self::new(
                ErrorKind::ProviderUnavailable,
                "Suggestions are temporarily unavailable. Try reloading, or continue without them.",
            ),
        }
    }

    pub fn from_parse(_err: &ParseError) -> Self {
        Self::new(
            ErrorKind::MalformedResponse,
            "The language model returned a response that could not be used. Try reloading the suggestions.",
        )
    }

    pub fn from_prompt(err: &PromptError) -> Self {
        Self::validation(err.to_string())
    }
}

impl IntoResponse for ErrorEnvelope {
    fn into_response(self) -> Response {
        let status = self.error_kind.status();
        let retry = self.retry_hint;
        let mut resp = (status, Json(self)).into_response();
        if let Some(secs) = retry {
            if let Ok(v) = HeaderValue::from_str(&(secs.ceil().max(0.0) as u64).to_string()) {
                resp.headers_mut().insert(header::RETRY_AFTER, v);
            }
        }
        resp
    }
}
