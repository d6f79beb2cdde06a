//! HTTP gateway in front of a chat-completion provider.
//!
//! Prompts stay on the server; clients only name a task and pass their
//! inputs. See [`routes::router`] for the endpoints.

pub mod clock;
pub mod config;
pub mod envelope;
pub mod rate_limit;
pub mod routes;
pub mod service;

use std::sync::Arc;

use smart_suggest_core::provider::{ChatCompletionsProvider, MockFallback, MockProvider};
use smart_suggest_core::registry::RegistryError;
use smart_suggest_core::store::{FeedbackStore, StoreError};
use smart_suggest_core::{ChatProvider, TaskRegistry};
use thiserror::Error;

pub use clock::{Clock, ManualClock, SystemClock};
pub use config::{GatewayConfig, ProviderKind};
pub use envelope::{ErrorEnvelope, ErrorKind};
pub use routes::router;
pub use service::SuggestionService;

#[derive(Debug, Error)]
pub enum StartupError {
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Provider selected by the configuration.
pub fn provider_for(config: &GatewayConfig) -> Arc<dyn ChatProvider> {
    match config.provider_kind {
        ProviderKind::Live => Arc::new(ChatCompletionsProvider::new()),
        ProviderKind::Mock => Arc::new(MockProvider::new(MockFallback::Synthesize)),
    }
}

/// Loads the registry and opens the store under `config.data_dir`.
pub fn build_service(
    config: &GatewayConfig,
    provider: Arc<dyn ChatProvider>,
    clock: Arc<dyn Clock>,
) -> Result<Arc<SuggestionService>, StartupError> {
    let registry = TaskRegistry::load(config.task_file.as_deref())?;
    let store = FeedbackStore::open_with(&config.data_dir, config.sync_writes)?;
    Ok(Arc::new(SuggestionService::new(
        config,
        Arc::new(registry),
        provider,
        Arc::new(store),
        clock,
    )))
}
