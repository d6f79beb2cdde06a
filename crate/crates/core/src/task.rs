//! Suggestion task definitions.
//!
//! A task bundles the prompt templates held server-side, the user inputs it
//! accepts, the function-calling schema the provider must answer with, and
//! the model parameters used for the call.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// Property the provider fills for closed recommendation tasks.
pub const SUGGESTIONS_PROPERTY: &str = "suggestions";
/// Property the provider fills for open feedback tasks.
pub const FEEDBACK_PROPERTY: &str = "feedback";

pub const DEFAULT_MODEL: &str = "gpt-3.5-turbo";
pub const DEFAULT_TEMPERATURE: f64 = 0.0;
pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    /// A fixed list of selectable options.
    ClosedRecommendation,
    /// A free-text advisory paragraph.
    OpenFeedback,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::ClosedRecommendation => "closed_recommendation",
            Category::OpenFeedback => "open_feedback",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    ShortText,
    LongText,
    StringList,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    pub required: bool,
    pub kind: FieldKind,
    pub max_chars: usize,
}

impl FieldSpec {
    pub fn new(name: &str, required: bool, kind: FieldKind, max_chars: usize) -> Self {
        Self {
            name: name.to_owned(),
            required,
            kind,
            max_chars,
        }
    }
}

/// A node of the function-calling parameter schema.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SchemaNode {
    Object {
        properties: BTreeMap<String, SchemaNode>,
        #[serde(default)]
        required: Vec<String>,
    },
    Text {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        description: Option<String>,
    },
    TextArray {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        description: Option<String>,
    },
}

impl SchemaNode {
    /// Renders the node as JSON Schema, the shape chat-completion providers
    /// expect in a tool's `parameters`.
    pub fn to_json_schema(&self) -> Value {
        match self {
            SchemaNode::Object {
                properties,
                required,
            } => {
                let props: serde_json::Map<String, Value> = properties
                    .iter()
                    .map(|(name, node)| (name.clone(), node.to_json_schema()))
                    .collect();
                json!({ "type": "object", "properties": props, "required": required })
            }
            SchemaNode::Text { description } => {
                let mut v = json!({ "type": "string" });
                if let Some(d) = description {
                    v["description"] = json!(d);
                }
                v
            }
            SchemaNode::TextArray { description } => {
                let mut v = json!({ "type": "array", "items": { "type": "string" } });
                if let Some(d) = description {
                    v["description"] = json!(d);
                }
                v
            }
        }
    }

    pub fn property(&self, name: &str) -> Option<&SchemaNode> {
        match self {
            SchemaNode::Object { properties, .. } => properties.get(name),
            _ => None,
        }
    }

    pub fn is_required(&self, name: &str) -> bool {
        match self {
            SchemaNode::Object { required, .. } => required.iter().any(|r| r == name),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputSchema {
    pub function_name: String,
    pub description: String,
    pub parameters: SchemaNode,
}

impl OutputSchema {
    /// Schema for closed tasks: a required array of strings named `suggestions`.
    pub fn suggestions(function_name: &str, description: &str) -> Self {
        let mut properties = BTreeMap::new();
        properties.insert(
            SUGGESTIONS_PROPERTY.to_owned(),
            SchemaNode::TextArray {
                description: Some("List of suggested values".to_owned()),
            },
        );
        Self {
            function_name: function_name.to_owned(),
            description: description.to_owned(),
            parameters: SchemaNode::Object {
                properties,
                required: vec![SUGGESTIONS_PROPERTY.to_owned()],
            },
        }
    }

    /// Schema for open tasks: a single required text property named `feedback`.
    pub fn feedback(function_name: &str, description: &str) -> Self {
        let mut properties = BTreeMap::new();
        properties.insert(
            FEEDBACK_PROPERTY.to_owned(),
            SchemaNode::Text {
                description: Some("Feedback text for the user".to_owned()),
            },
        );
        Self {
            function_name: function_name.to_owned(),
            description: description.to_owned(),
            parameters: SchemaNode::Object {
                properties,
                required: vec![FEEDBACK_PROPERTY.to_owned()],
            },
        }
    }

    /// The `function` object of a chat-completions tool definition.
    pub fn to_tool_function(&self) -> Value {
        json!({
            "name": self.function_name,
            "description": self.description,
            "parameters": self.parameters.to_json_schema(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub model_name: String,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            temperature: DEFAULT_TEMPERATURE,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
            model_name: DEFAULT_MODEL.to_owned(),
        }
    }
}

impl ModelParams {
    pub fn temperature_in_range(t: f64) -> bool {
        (0.0..=2.0).contains(&t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestionTask {
    pub task_id: String,
    pub title: String,
    pub category: Category,
    pub system_prompt_template: String,
    pub user_prompt_template: String,
    pub input_fields: Vec<FieldSpec>,
    pub output_schema: OutputSchema,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_suggestions: Option<u32>,
    #[serde(default)]
    pub model_params: ModelParams,
    /// Append a fixed sentence to the system message asking for the
    /// structured function output.
    #[serde(default)]
    pub request_json_instruction: bool,
}

impl SuggestionTask {
    pub fn field(&self, name: &str) -> Option<&FieldSpec> {
        self.input_fields.iter().find(|f| f.name == name)
    }

    pub fn is_closed(&self) -> bool {
        self.category == Category::ClosedRecommendation
    }
}
