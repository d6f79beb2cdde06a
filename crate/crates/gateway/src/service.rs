//! Request handling independent of HTTP.
//!
//! A create goes rate check, validate and render, cache lookup, provider
//! call, parse, persist, respond. Every failure comes back as an
//! [`ErrorEnvelope`]; nothing here panics on bad input or provider faults.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Duration;

use chrono::Utc;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use smart_suggest_core::store::{
    EventKind, FeedbackLevel, FeedbackRecord, FeedbackStore, ResultRecord, StoreError, TaskStats,
    TriState, UsageEvent,
};
use smart_suggest_core::{
    complete, parse_result, render_prompt, Category, ChatProvider, FieldSpec, Inputs,
    PromptBundle, PromptHash, Provenance, ProviderConfig, SuggestionResult, SuggestionTask,
    TaskRegistry,
};

use crate::clock::Clock;
use crate::config::GatewayConfig;
use crate::envelope::{ErrorEnvelope, ErrorKind};
use crate::rate_limit::{RateDecision, RateLimiter};

pub const DISCLAIMER: &str = "These suggestions are generated by a language model and might be wrong or misleading. Please review them before use.";

/// Public view of a task. Prompt templates stay on the server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMetadata {
    pub task_id: String,
    pub title: String,
    pub category: Category,
    pub input_fields: Vec<FieldSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_suggestions: Option<u32>,
    pub model_name: String,
    pub disclaimer: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct CreateRequest {
    pub task_id: String,
    #[serde(default)]
    pub inputs: Inputs,
    pub client_id: String,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
pub enum TriInput {
    Flag(bool),
    State(TriState),
}

impl From<TriInput> for TriState {
    fn from(v: TriInput) -> Self {
        match v {
            TriInput::Flag(true) => TriState::Yes,
            TriInput::Flag(false) => TriState::No,
            TriInput::State(s) => s,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct FeedbackRequest {
    pub result_id: Uuid,
    pub level: FeedbackLevel,
    #[serde(default)]
    pub helpful: Option<TriInput>,
    #[serde(default)]
    pub correct: Option<TriInput>,
    #[serde(default)]
    pub confusing: Option<TriInput>,
    #[serde(default)]
    pub free_text: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeedbackAck {
    pub feedback_id: Uuid,
    pub orphan: bool,
}

#[derive(Debug, Clone, Deserialize)]
pub struct EventRequest {
    pub result_id: Uuid,
    pub kind: EventKind,
    #[serde(default)]
    pub item_index: Option<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EventAck {
    pub event_id: Uuid,
}

#[derive(Debug, Clone)]
struct CacheEntry {
    result: SuggestionResult,
    stored_at: Duration,
}

/// What regenerate needs to replay a request.
#[derive(Debug, Clone)]
struct RetainedContext {
    task_id: String,
    inputs: Inputs,
    client_id: String,
    attempt: u32,
    stored_at: Duration,
}

pub struct SuggestionService {
    registry: Arc<TaskRegistry>,
    provider: Arc<dyn ChatProvider>,
    provider_config: ProviderConfig,
    store: Arc<FeedbackStore>,
    limiter: RateLimiter,
    clock: Arc<dyn Clock>,
    cache: Mutex<HashMap<PromptHash, CacheEntry>>,
    contexts: Mutex<HashMap<Uuid, RetainedContext>>,
    cache_ttl: Duration,
    context_ttl: Duration,
    token_budget: usize,
}

impl std::fmt::Debug for SuggestionService {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SuggestionService")
            .field("provider", &self.provider.name())
            .field("tasks", &self.registry.len())
            .finish_non_exhaustive()
    }
}

fn store_envelope(err: StoreError) -> ErrorEnvelope {
    match err {
        StoreError::Validation(msg) => ErrorEnvelope::validation(msg),
        StoreError::UnknownResult(id) => ErrorEnvelope::validation(format!("unknown result: {id}")),
        StoreError::UnknownTask(id) => {
            ErrorEnvelope::new(ErrorKind::UnknownTask, format!("unknown task: {id}"))
        }
        StoreError::StorageFailure(e) => {
            tracing::error!(error = %e, "storage failure");
            ErrorEnvelope::internal()
        }
    }
}

impl SuggestionService {
    pub fn new(
        config: &GatewayConfig,
        registry: Arc<TaskRegistry>,
        provider: Arc<dyn ChatProvider>,
        store: Arc<FeedbackStore>,
        clock: Arc<dyn Clock>,
    ) -> Self {
        Self {
            registry,
            provider,
            provider_config: config.provider.clone(),
            store,
            limiter: RateLimiter::new(config.rate_bucket, config.rate_refill_per_s, clock.clone()),
            clock,
            cache: Mutex::new(HashMap::new()),
            contexts: Mutex::new(HashMap::new()),
            cache_ttl: config.cache_ttl,
            context_ttl: config.context_ttl(),
            token_budget: config.token_budget,
        }
    }

    pub fn registry(&self) -> &TaskRegistry {
        &self.registry
    }

    pub fn store(&self) -> &FeedbackStore {
        &self.store
    }

    fn model_name(&self, task: &SuggestionTask) -> String {
        self.provider_config
            .model_name
            .clone()
            .unwrap_or_else(|| task.model_params.model_name.clone())
    }

    pub fn list_tasks(&self) -> Vec<TaskMetadata> {
        self.registry
            .list_tasks()
            .iter()
            .map(|t| TaskMetadata {
                task_id: t.task_id.clone(),
                title: t.title.clone(),
                category: t.category,
                input_fields: t.input_fields.clone(),
                max_suggestions: t.max_suggestions,
                model_name: self.model_name(t),
                disclaimer: DISCLAIMER.to_owned(),
            })
            .collect()
    }

    fn rate_check(&self, client_id: &str) -> Result<(), ErrorEnvelope> {
        match self.limiter.check(client_id) {
            RateDecision::Allow => Ok(()),
            RateDecision::Deny { retry_after } => Err(ErrorEnvelope::new(
                ErrorKind::RateLimited,
                "Too many suggestion requests. Please wait a moment.",
            )
            .with_retry_hint(retry_after.as_secs_f64())),
        }
    }

    fn prepare(&self, task_id: &str, inputs: &Inputs) -> Result<(&SuggestionTask, PromptBundle), ErrorEnvelope> {
        let task = self.registry.get_task(task_id).map_err(|_| {
            ErrorEnvelope::new(ErrorKind::UnknownTask, format!("unknown task: {task_id}"))
        })?;
        let bundle = render_prompt(task, inputs, self.token_budget)
            .map_err(|e| ErrorEnvelope::from_prompt(&e))?;
        Ok((task, bundle))
    }

    fn cached(&self, hash: &PromptHash) -> Option<SuggestionResult> {
        let now = self.clock.now();
        let mut cache = self.cache.lock();
        match cache.get(hash) {
            Some(e) if now.saturating_sub(e.stored_at) < self.cache_ttl => Some(e.result.clone()),
            Some(_) => {
                cache.remove(hash);
                None
            }
            None => None,
        }
    }

    fn cache_insert(&self, result: &SuggestionResult) {
        let now = self.clock.now();
        let ttl = self.cache_ttl;
        let mut cache = self.cache.lock();
        cache.retain(|_, e| now.saturating_sub(e.stored_at) < ttl);
        cache.insert(
            result.prompt_hash.clone(),
            CacheEntry {
                result: result.clone(),
                stored_at: now,
            },
        );
    }

    fn retain_context(&self, result_id: Uuid, task_id: &str, inputs: &Inputs, client_id: &str, attempt: u32) {
        let now = self.clock.now();
        let ttl = self.context_ttl;
        let mut contexts = self.contexts.lock();
        contexts.retain(|_, c| now.saturating_sub(c.stored_at) < ttl);
        contexts.insert(
            result_id,
            RetainedContext {
                task_id: task_id.to_owned(),
                inputs: inputs.clone(),
                client_id: client_id.to_owned(),
                attempt,
                stored_at: now,
            },
        );
    }

    fn context(&self, result_id: &Uuid) -> Option<RetainedContext> {
        let now = self.clock.now();
        let mut contexts = self.contexts.lock();
        match contexts.get(result_id) {
            Some(c) if now.saturating_sub(c.stored_at) < self.context_ttl => Some(c.clone()),
            Some(_) => {
                contexts.remove(result_id);
                None
            }
            None => None,
        }
    }

    fn emit(&self, result_id: Uuid, kind: EventKind) -> Result<(), ErrorEnvelope> {
        self.store
            .record_event(UsageEvent::new(result_id, kind, None))
            .map(|_| ())
            .map_err(store_envelope)
    }

    /// Calls the provider, parses and persists. Failed attempts get an id
    /// too, so the client can regenerate from an error.
    async fn generate(
        &self,
        task: &SuggestionTask,
        bundle: &PromptBundle,
        inputs: &Inputs,
        client_id: &str,
        attempt: u32,
        success_event: EventKind,
    ) -> Result<SuggestionResult, ErrorEnvelope> {
        let outcome = complete(self.provider.as_ref(), bundle, &self.provider_config)
            .await
            .map_err(|e| {
                tracing::warn!(task = %task.task_id, error = %e, "provider call failed");
                ErrorEnvelope::from_provider(&e)
            })
            .and_then(|raw| {
                let provenance = Provenance {
                    model_name: self.model_name(task),
                    prompt_hash: bundle.prompt_hash.clone(),
                    latency_ms: raw.latency_ms,
                    attempt,
                };
                parse_result(task, &raw, provenance).map_err(|e| {
                    tracing::warn!(task = %task.task_id, error = %e, "unusable provider response");
                    ErrorEnvelope::from_parse(&e)
                })
            });

        match outcome {
            Ok(result) => {
                self.store
                    .record_result(ResultRecord {
                        result_id: result.result_id,
                        task_id: task.task_id.clone(),
                        item_count: result.items.len() as u32,
                        created_at: result.created_at,
                    })
                    .map_err(store_envelope)?;
                self.retain_context(result.result_id, &task.task_id, inputs, client_id, attempt);
                self.cache_insert(&result);
                self.emit(result.result_id, success_event)?;
                Ok(result)
            }
            Err(envelope) => {
                let failed_id = Uuid::new_v4();
                self.store
                    .record_result(ResultRecord {
                        result_id: failed_id,
                        task_id: task.task_id.clone(),
                        item_count: 0,
                        created_at: Utc::now(),
                    })
                    .map_err(store_envelope)?;
                self.retain_context(failed_id, &task.task_id, inputs, client_id, attempt);
                self.emit(failed_id, EventKind::Error)?;
                Err(envelope.with_result_id(failed_id))
            }
        }
    }

    pub async fn create_suggestion(&self, req: CreateRequest) -> Result<SuggestionResult, ErrorEnvelope> {
        if req.client_id.trim().is_empty() {
            return Err(ErrorEnvelope::validation("client_id is required"));
        }
        self.rate_check(&req.client_id)?;
        let (task, bundle) = self.prepare(&req.task_id, &req.inputs)?;

        if let Some(hit) = self.cached(&bundle.prompt_hash) {
            self.emit(hit.result_id, EventKind::Shown)?;
            return Ok(hit);
        }
        self.generate(task, &bundle, &req.inputs, &req.client_id, 1, EventKind::Shown)
            .await
    }

    pub async fn regenerate(&self, result_id: Uuid) -> Result<SuggestionResult, ErrorEnvelope> {
        let ctx = self.context(&result_id).ok_or_else(|| {
            ErrorEnvelope::validation(format!("unknown or expired result: {result_id}"))
        })?;
        self.rate_check(&ctx.client_id)?;
        let (task, bundle) = self.prepare(&ctx.task_id, &ctx.inputs)?;
        self.generate(
            task,
            &bundle,
            &ctx.inputs,
            &ctx.client_id,
            ctx.attempt + 1,
            EventKind::Regenerated,
        )
        .await
    }

    pub fn record_feedback(&self, req: FeedbackRequest) -> Result<FeedbackAck, ErrorEnvelope> {
        let mut record = FeedbackRecord::new(req.result_id, req.level);
        record.helpful = req.helpful.map(Into::into).unwrap_or_default();
        record.correct = req.correct.map(Into::into).unwrap_or_default();
        record.confusing = req.confusing.map(Into::into).unwrap_or_default();
        record.free_text = req.free_text.filter(|t| !t.trim().is_empty());
        let stored = self.store.record_feedback(record).map_err(store_envelope)?;
        Ok(FeedbackAck {
            feedback_id: stored.feedback_id,
            orphan: stored.orphan,
        })
    }

    pub fn record_event(&self, req: EventRequest) -> Result<EventAck, ErrorEnvelope> {
        let event = self
            .store
            .record_event(UsageEvent::new(req.result_id, req.kind, req.item_index))
            .map_err(store_envelope)?;
        Ok(EventAck {
            event_id: event.event_id,
        })
    }

    pub fn stats(&self, task_id: &str) -> Result<TaskStats, ErrorEnvelope> {
        self.store
            .aggregate_stats(&self.registry, task_id)
            .map_err(store_envelope)
    }

    pub fn all_stats(&self) -> Result<Vec<TaskStats>, ErrorEnvelope> {
        self.registry
            .list_tasks()
            .iter()
            .map(|t| self.stats(&t.task_id))
            .collect()
    }
}
