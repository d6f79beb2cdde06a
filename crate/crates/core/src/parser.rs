//! Turning raw provider replies into suggestion results.

use std::collections::HashSet;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use uuid::Uuid;

use crate::prompt::PromptHash;
use crate::provider::{RawProviderResponse, ResponseKind};
use crate::task::{Category, SchemaNode, SuggestionTask, FEEDBACK_PROPERTY, SUGGESTIONS_PROPERTY};

pub const MAX_LABEL_CHARS: usize = 200;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuggestionItem {
    pub label: String,
    /// 1-based position in the returned list.
    pub rank: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestionResult {
    pub result_id: Uuid,
    pub task_id: String,
    pub category: Category,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub items: Vec<SuggestionItem>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback_text: Option<String>,
    pub model_name: String,
    pub prompt_hash: PromptHash,
    pub created_at: DateTime<Utc>,
    pub latency_ms: u64,
    pub attempt: u32,
    /// Adjustments made while parsing (truncation, dropped duplicates).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl SuggestionResult {
    pub fn labels(&self) -> Vec<&str> {
        self.items.iter().map(|i| i.label.as_str()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct Provenance {
    pub model_name: String,
    pub prompt_hash: PromptHash,
    pub latency_ms: u64,
    pub attempt: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("response could not be parsed: {0}")]
    MalformedResponse(String),
    #[error("response does not match the output schema: {0}")]
    SchemaMismatch(String),
    #[error("response contained no usable suggestions")]
    EmptyResult,
}

/// Finds the end of the balanced bracket group opening at `start`, treating
/// JSON string literals as opaque. Returns the index of the closing byte.
fn balanced_end(bytes: &[u8], start: usize) -> Option<usize> {
    let mut stack = Vec::new();
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => stack.push(b'}'),
            b'[' => stack.push(b']'),
            b'}' | b']' => {
                if stack.pop() != Some(b) {
                    return None;
                }
                if stack.is_empty() {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

/// Returns the first balanced `{...}` or `[...]` substring that parses as
/// JSON, trying every opening bracket from left to right.
pub fn extract_json_lenient(text: &str) -> Option<Value> {
    let bytes = text.as_bytes();
    for (start, &b) in bytes.iter().enumerate() {
        if b != b'{' && b != b'[' {
            continue;
        }
        if let Some(end) = balanced_end(bytes, start) {
            if let Ok(v) = serde_json::from_str::<Value>(&text[start..=end]) {
                return Some(v);
            }
        }
    }
    None
}

fn check_required(schema: &SchemaNode, value: &Value) -> Result<(), ParseError> {
    let SchemaNode::Object {
        properties,
        required,
    } = schema
    else {
        return Ok(());
    };
    let obj = value
        .as_object()
        .ok_or_else(|| ParseError::SchemaMismatch("expected a JSON object".to_owned()))?;
    for name in required {
        let Some(v) = obj.get(name) else {
            return Err(ParseError::SchemaMismatch(format!(
                "missing required property {name:?}"
            )));
        };
        let ok = match properties.get(name) {
            Some(SchemaNode::Text { .. }) => v.is_string(),
            Some(SchemaNode::TextArray { .. }) => v.is_array(),
            Some(SchemaNode::Object { .. }) => v.is_object(),
            None => true,
        };
        if !ok {
            return Err(ParseError::SchemaMismatch(format!(
                "property {name:?} has the wrong type"
            )));
        }
    }
    Ok(())
}

fn truncate_chars(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

/// Trims, caps, drops empties and removes case-insensitive duplicates
/// (keeping the first), then cuts the list to `max`.
pub fn clean_labels<'a, I>(raw: I, max: usize, notes: &mut Vec<String>) -> Vec<SuggestionItem>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut seen = HashSet::new();
    let mut labels = Vec::new();
    let mut duplicates = 0;
    let mut capped = 0;
    for label in raw {
        let trimmed = label.trim();
        let cut = truncate_chars(trimmed, MAX_LABEL_CHARS);
        if cut.len() != trimmed.len() {
            capped += 1;
        }
        let cut = cut.trim();
        if cut.is_empty() {
            continue;
        }
        if !seen.insert(cut.to_lowercase()) {
            duplicates += 1;
            continue;
        }
        labels.push(cut.to_owned());
    }
    if capped > 0 {
        notes.push(format!("{capped} label(s) cut to {MAX_LABEL_CHARS} characters"));
    }
    if duplicates > 0 {
        notes.push(format!("dropped {duplicates} duplicate suggestion(s)"));
    }
    if labels.len() > max {
        notes.push(format!(
            "truncated {} suggestions to the first {max}",
            labels.len()
        ));
        labels.truncate(max);
    }
    labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| SuggestionItem {
            label,
            rank: i as u32 + 1,
        })
        .collect()
}

fn suggestion_strings(value: &Value) -> Vec<&str> {
    value
        .as_array()
        .map(|a| a.iter().filter_map(Value::as_str).collect())
        .unwrap_or_default()
}

fn parse_closed(
    task: &SuggestionTask,
    raw: &RawProviderResponse,
    notes: &mut Vec<String>,
) -> Result<Vec<SuggestionItem>, ParseError> {
    let value = match raw.kind {
        ResponseKind::ToolCall => serde_json::from_str::<Value>(&raw.payload)
            .map_err(|e| ParseError::MalformedResponse(format!("tool call arguments: {e}")))?,
        ResponseKind::ContentText => extract_json_lenient(&raw.payload).ok_or_else(|| {
            ParseError::MalformedResponse("no JSON found in the response text".to_owned())
        })?,
    };
    let strings = match (&value, raw.kind) {
        // a bare list is accepted only from free text
        (Value::Array(_), ResponseKind::ContentText) => suggestion_strings(&value),
        _ => {
            check_required(&task.output_schema.parameters, &value)?;
            let list = value.get(SUGGESTIONS_PROPERTY).ok_or_else(|| {
                ParseError::SchemaMismatch(format!("missing property {SUGGESTIONS_PROPERTY:?}"))
            })?;
            if !list.is_array() {
                return Err(ParseError::SchemaMismatch(format!(
                    "property {SUGGESTIONS_PROPERTY:?} is not a list"
                )));
            }
            suggestion_strings(list)
        }
    };
    let max = task.max_suggestions.unwrap_or(1) as usize;
    let items = clean_labels(strings, max, notes);
    if items.is_empty() {
        return Err(ParseError::EmptyResult);
    }
    Ok(items)
}

fn non_empty_feedback(text: &str) -> Result<String, ParseError> {
    let t = text.trim();
    if t.is_empty() {
        Err(ParseError::EmptyResult)
    } else {
        Ok(t.to_owned())
    }
}

fn parse_open(task: &SuggestionTask, raw: &RawProviderResponse) -> Result<String, ParseError> {
    match raw.kind {
        ResponseKind::ToolCall => {
            let value: Value = serde_json::from_str(&raw.payload)
                .map_err(|e| ParseError::MalformedResponse(format!("tool call arguments: {e}")))?;
            check_required(&task.output_schema.parameters, &value)?;
            non_empty_feedback(value[FEEDBACK_PROPERTY].as_str().unwrap_or_default())
        }
        ResponseKind::ContentText => {
            let text = raw.payload.trim();
            if text.is_empty() {
                return Err(ParseError::MalformedResponse("empty response text".to_owned()));
            }
            match extract_json_lenient(text) {
                Some(v) if v.get(FEEDBACK_PROPERTY).is_some_and(Value::is_string) => {
                    non_empty_feedback(v[FEEDBACK_PROPERTY].as_str().unwrap_or_default())
                }
                // the whole reply is JSON, just not the expected shape
                Some(v) if serde_json::from_str::<Value>(text).ok().as_ref() == Some(&v) => {
                    Err(ParseError::SchemaMismatch(format!(
                        "missing property {FEEDBACK_PROPERTY:?}"
                    )))
                }
                _ => Ok(text.to_owned()),
            }
        }
    }
}

pub fn parse_result(
    task: &SuggestionTask,
    raw: &RawProviderResponse,
    provenance: Provenance,
) -> Result<SuggestionResult, ParseError> {
    let mut notes = Vec::new();
    let (items, feedback_text) = match task.category {
        Category::ClosedRecommendation => (parse_closed(task, raw, &mut notes)?, None),
        Category::OpenFeedback => (Vec::new(), Some(parse_open(task, raw)?)),
    };
    Ok(SuggestionResult {
        result_id: Uuid::new_v4(),
        task_id: task.task_id.clone(),
        category: task.category,
        items,
        feedback_text,
        model_name: provenance.model_name,
        prompt_hash: provenance.prompt_hash,
        created_at: Utc::now(),
        latency_ms: provenance.latency_ms,
        attempt: provenance.attempt.max(1),
        notes,
    })
}
