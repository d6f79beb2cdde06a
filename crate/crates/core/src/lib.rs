//! Core of the smart-suggest gateway.
//!
//! Holds the task catalog, renders prompts, talks to chat-completion
//! providers, parses replies into suggestions, records feedback and usage,
//! and measures the stability of repeated prompts.

pub mod catalog;
pub mod parser;
pub mod prompt;
pub mod provider;
pub mod registry;
pub mod stability;
pub mod store;
pub mod task;
pub mod template;

pub use parser::{extract_json_lenient, parse_result, ParseError, Provenance, SuggestionItem, SuggestionResult};
pub use prompt::{estimate_tokens, render_prompt, validate_inputs, InputValue, Inputs, PromptBundle, PromptError, PromptHash, Violation};
pub use provider::{complete, ChatProvider, ProviderConfig, ProviderError, RawProviderResponse, ResponseKind};
pub use registry::{RegistryError, TaskRegistry};
pub use task::{Category, FieldKind, FieldSpec, ModelParams, OutputSchema, SchemaNode, SuggestionTask};
