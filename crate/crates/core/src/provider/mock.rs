//! Deterministic in-process provider for tests and offline runs.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{ChatProvider, ProviderConfig, ProviderError, RawProviderResponse};
use crate::prompt::{PromptBundle, PromptHash};
use crate::task::SchemaNode;

/// One scripted reply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", content = "value", rename_all = "snake_case")]
pub enum ScriptedOutcome {
    ToolCall(String),
    Content(String),
    Fail(ProviderError),
    /// Never answers; the caller's timeout fires.
    Hang,
}

impl ScriptedOutcome {
    pub fn tool_call(value: &Value) -> Self {
        ScriptedOutcome::ToolCall(value.to_string())
    }
}

/// What to answer for prompts that have no script.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "fallback", content = "value", rename_all = "snake_case")]
pub enum MockFallback {
    Fixed(ScriptedOutcome),
    /// Cycles through the outcomes across all unscripted calls.
    Sequence(Vec<ScriptedOutcome>),
    /// Builds a schema-valid tool call from the bundle's tool spec.
    Synthesize,
    TransportError,
}

/// Serialized form of a mock script, as read from disk.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub by_hash: HashMap<PromptHash, Vec<ScriptedOutcome>>,
    #[serde(default)]
    pub fallback: Option<MockFallback>,
}

/// Replays scripted outcomes keyed by prompt hash. The nth call for a hash
/// gets the nth scripted outcome, wrapping around when the list runs out.
#[derive(Debug)]
pub struct MockProvider {
    script: HashMap<PromptHash, Vec<ScriptedOutcome>>,
    fallback: MockFallback,
    positions: Mutex<HashMap<Option<PromptHash>, usize>>,
    calls: AtomicUsize,
    latency: Option<Duration>,
    seen: Mutex<Vec<PromptHash>>,
}

impl MockProvider {
    pub fn new(fallback: MockFallback) -> Self {
        Self {
            script: HashMap::new(),
            fallback,
            positions: Mutex::new(HashMap::new()),
            calls: AtomicUsize::new(0),
            latency: None,
            seen: Mutex::new(Vec::new()),
        }
    }

    pub fn from_script(script: MockScript) -> Self {
        let mut mock = Self::new(script.fallback.unwrap_or(MockFallback::Synthesize));
        mock.script = script.by_hash;
        mock
    }

    pub fn with_script(mut self, hash: PromptHash, outcomes: Vec<ScriptedOutcome>) -> Self {
        self.script.insert(hash, outcomes);
        self
    }

    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = Some(latency);
        self
    }

    /// Number of `send` calls so far.
    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Prompt hashes in call order.
    pub fn seen_hashes(&self) -> Vec<PromptHash> {
        self.seen.lock().unwrap().clone()
    }

    fn next_index(&self, key: Option<PromptHash>, len: usize) -> usize {
        let mut positions = self.positions.lock().unwrap();
        let pos = positions.entry(key).or_insert(0);
        let i = *pos % len;
        *pos += 1;
        i
    }

    fn pick(&self, bundle: &PromptBundle) -> Option<ScriptedOutcome> {
        if let Some(outcomes) = self.script.get(&bundle.prompt_hash) {
            if !outcomes.is_empty() {
                let i = self.next_index(Some(bundle.prompt_hash.clone()), outcomes.len());
                return Some(outcomes[i].clone());
            }
        }
        match &self.fallback {
            MockFallback::Fixed(o) => Some(o.clone()),
            MockFallback::Sequence(seq) if !seq.is_empty() => {
                Some(seq[self.next_index(None, seq.len())].clone())
            }
            MockFallback::Sequence(_) | MockFallback::TransportError => None,
            MockFallback::Synthesize => Some(ScriptedOutcome::ToolCall(synthesize(bundle))),
        }
    }
}

fn synthesize(bundle: &PromptBundle) -> String {
    let mut args = Map::new();
    if let SchemaNode::Object { properties, .. } = &bundle.tool_spec.parameters {
        for (name, node) in properties {
            let value = match node {
                SchemaNode::TextArray { .. } => json!(["mock suggestion 1", "mock suggestion 2", "mock suggestion 3"]),
                SchemaNode::Text { .. } => json!("This might be improved by adding more detail."),
                SchemaNode::Object { .. } => json!({}),
            };
            args.insert(name.clone(), value);
        }
    }
    Value::Object(args).to_string()
}

#[async_trait]
impl ChatProvider for MockProvider {
    async fn send(
        &self,
        bundle: &PromptBundle,
        _config: &ProviderConfig,
    ) -> Result<RawProviderResponse, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.seen.lock().unwrap().push(bundle.prompt_hash.clone());
        if let Some(latency) = self.latency {
            tokio::time::sleep(latency).await;
        }
        match self.pick(bundle) {
            Some(ScriptedOutcome::ToolCall(p)) => Ok(RawProviderResponse::tool_call(p)),
            Some(ScriptedOutcome::Content(p)) => Ok(RawProviderResponse::content_text(p)),
            Some(ScriptedOutcome::Fail(e)) => Err(e),
            Some(ScriptedOutcome::Hang) => {
                std::future::pending::<()>().await;
                unreachable!()
            }
            None => Err(ProviderError::transport("mock provider has no scripted outcome")),
        }
    }

    fn name(&self) -> &str {
        "mock"
    }
}
