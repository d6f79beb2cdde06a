//! Rendering tasks and user inputs into provider-ready prompt bundles.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::task::{FieldKind, ModelParams, OutputSchema, SuggestionTask};
use crate::template;

/// Default cap on the estimated tokens of system plus user message.
pub const DEFAULT_TOKEN_BUDGET: usize = 3_000;

/// Sentence appended to the system message of tasks that opt in, asking the
/// model to answer through the declared function.
pub const JSON_INSTRUCTION: &str =
    "Respond in JSON format by calling the provided function with your answer.";

const LIST_SEPARATOR: &str = ", ";

/// A user-supplied value for one input field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InputValue {
    Text(String),
    List(Vec<String>),
}

impl InputValue {
    fn is_blank(&self) -> bool {
        match self {
            InputValue::Text(s) => s.trim().is_empty(),
            InputValue::List(items) => items.iter().all(|s| s.trim().is_empty()),
        }
    }

    /// Text substituted into a template for this value.
    pub fn rendered(&self) -> String {
        match self {
            InputValue::Text(s) => s.clone(),
            InputValue::List(items) => items.join(LIST_SEPARATOR),
        }
    }
}

impl From<&str> for InputValue {
    fn from(s: &str) -> Self {
        InputValue::Text(s.to_owned())
    }
}

impl From<Vec<&str>> for InputValue {
    fn from(items: Vec<&str>) -> Self {
        InputValue::List(items.into_iter().map(str::to_owned).collect())
    }
}

pub type Inputs = BTreeMap<String, InputValue>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "violation", content = "field", rename_all = "snake_case")]
pub enum Violation {
    MissingRequired(String),
    TooLong(String),
    UnknownField(String),
    WrongKind(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MissingRequired(n) => write!(f, "missing required field: {n}"),
            Violation::TooLong(n) => write!(f, "field too long: {n}"),
            Violation::UnknownField(n) => write!(f, "unknown field: {n}"),
            Violation::WrongKind(n) => write!(f, "field has the wrong kind: {n}"),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("input validation failed: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    ValidationFailed(Vec<Violation>),
    #[error("prompt exceeds the token budget ({estimated} > {budget})")]
    BudgetExceeded { estimated: usize, budget: usize },
}

/// Stable digest of a rendered prompt, hex encoded (128 bits).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PromptHash(String);

impl PromptHash {
    pub fn compute(task_id: &str, system_message: &str, user_message: &str) -> Self {
        let mut h = Sha256::new();
        h.update(task_id.as_bytes());
        h.update([0u8]);
        h.update(system_message.as_bytes());
        h.update([0u8]);
        h.update(user_message.as_bytes());
        let digest = h.finalize();
        PromptHash(hex::encode(&digest[..16]))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PromptHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptBundle {
    pub task_id: String,
    pub system_message: String,
    pub user_message: String,
    pub tool_spec: OutputSchema,
    /// Whether the provider must be forced to call `tool_spec`.
    pub force_tool: bool,
    pub model_params: ModelParams,
    pub prompt_hash: PromptHash,
}

/// Byte length divided by four, rounded up.
pub fn estimate_tokens(text: &str) -> usize {
    text.len().div_ceil(4)
}

pub fn validate_inputs(task: &SuggestionTask, inputs: &Inputs) -> Vec<Violation> {
    let mut out = Vec::new();
    for field in &task.input_fields {
        match inputs.get(&field.name) {
            None => {
                if field.required {
                    out.push(Violation::MissingRequired(field.name.clone()));
                }
            }
            Some(value) => {
                if matches!(
                    (field.kind, value),
                    (FieldKind::ShortText | FieldKind::LongText, InputValue::List(_))
                ) {
                    out.push(Violation::WrongKind(field.name.clone()));
                    continue;
                }
                if field.required && value.is_blank() {
                    out.push(Violation::MissingRequired(field.name.clone()));
                } else if value.rendered().chars().count() > field.max_chars {
                    out.push(Violation::TooLong(field.name.clone()));
                }
            }
        }
    }
    for name in inputs.keys() {
        if task.field(name).is_none() {
            out.push(Violation::UnknownField(name.clone()));
        }
    }
    out
}

pub fn render_prompt(
    task: &SuggestionTask,
    inputs: &Inputs,
    token_budget: usize,
) -> Result<PromptBundle, PromptError> {
    let violations = validate_inputs(task, inputs);
    if !violations.is_empty() {
        return Err(PromptError::ValidationFailed(violations));
    }

    let lookup = |name: &str| {
        inputs
            .get(name)
            .filter(|v| !v.is_blank())
            .map(InputValue::rendered)
    };
    let mut system_message = template::render(&task.system_prompt_template, lookup);
    if task.request_json_instruction {
        system_message.push(' ');
        system_message.push_str(JSON_INSTRUCTION);
    }
    let user_message = template::render(&task.user_prompt_template, lookup);

    let estimated = (system_message.len() + user_message.len()).div_ceil(4);
    if estimated > token_budget {
        return Err(PromptError::BudgetExceeded {
            estimated,
            budget: token_budget,
        });
    }

    let prompt_hash = PromptHash::compute(&task.task_id, &system_message, &user_message);
    Ok(PromptBundle {
        task_id: task.task_id.clone(),
        system_message,
        user_message,
        tool_spec: task.output_schema.clone(),
        force_tool: task.is_closed(),
        model_params: task.model_params.clone(),
        prompt_hash,
    })
}
