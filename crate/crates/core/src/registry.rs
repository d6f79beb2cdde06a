//! Catalog of suggestion tasks.
//!
//! The registry is filled once at startup (built-ins plus an optional task
//! definition file) and is read-only afterwards.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::catalog;
use crate::task::{Category, SchemaNode, SuggestionTask, FEEDBACK_PROPERTY, SUGGESTIONS_PROPERTY};
use crate::template;

pub const MAX_SUGGESTIONS_LIMIT: u32 = 10;

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("duplicate task id: {0}")]
    DuplicateTaskId(String),
    #[error("invalid task {task_id}: {}", violations.join("; "))]
    InvalidTask {
        task_id: String,
        violations: Vec<String>,
    },
    #[error("unknown task: {0}")]
    UnknownTask(String),
    #[error("cannot read task file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse task file {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

fn is_slug(id: &str) -> bool {
    !id.is_empty()
        && id
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-')
}

/// Returns every structural problem with `task`; empty when it is well formed.
pub fn check_task(task: &SuggestionTask) -> Vec<String> {
    let mut v = Vec::new();

    if !is_slug(&task.task_id) {
        v.push(format!("task_id must be a nonempty slug: {:?}", task.task_id));
    }
    if task.system_prompt_template.trim().is_empty() {
        v.push("system prompt template is empty".to_owned());
    }

    let mut names = BTreeSet::new();
    for field in &task.input_fields {
        if !template::is_field_name(&field.name) {
            v.push(format!("invalid field name: {:?}", field.name));
        }
        if field.max_chars == 0 {
            v.push(format!("max_chars must be positive: {}", field.name));
        }
        if !names.insert(field.name.as_str()) {
            v.push(format!("duplicate field: {}", field.name));
        }
    }

    let mut used = template::placeholders(&task.system_prompt_template);
    used.extend(template::placeholders(&task.user_prompt_template));
    for name in &used {
        if !names.contains(name) {
            v.push(format!("unbound placeholder: {name}"));
        }
    }
    for field in task.input_fields.iter().filter(|f| f.required) {
        if !used.contains(field.name.as_str()) {
            v.push(format!("required field not referenced: {}", field.name));
        }
    }

    let schema = &task.output_schema;
    if schema.function_name.trim().is_empty() {
        v.push("output schema function name is empty".to_owned());
    }
    match &schema.parameters {
        SchemaNode::Object {
            properties,
            required,
        } => {
            for r in required {
                if !properties.contains_key(r) {
                    v.push(format!("required property not declared: {r}"));
                }
            }
        }
        _ => v.push("output schema root must be an object".to_owned()),
    }

    match task.category {
        Category::ClosedRecommendation => {
            match task.max_suggestions {
                Some(n) if (1..=MAX_SUGGESTIONS_LIMIT).contains(&n) => {}
                Some(n) => v.push(format!(
                    "max_suggestions must be within 1..={MAX_SUGGESTIONS_LIMIT}, got {n}"
                )),
                None => v.push("closed task requires max_suggestions".to_owned()),
            }
            if !matches!(
                schema.parameters.property(SUGGESTIONS_PROPERTY),
                Some(SchemaNode::TextArray { .. })
            ) {
                v.push(format!(
                    "closed task schema needs array-of-strings property {SUGGESTIONS_PROPERTY:?}"
                ));
            }
        }
        Category::OpenFeedback => {
            if task.max_suggestions.is_some() {
                v.push("open task must not set max_suggestions".to_owned());
            }
            let required_text: Vec<&str> = match &schema.parameters {
                SchemaNode::Object {
                    properties,
                    required,
                } => required
                    .iter()
                    .filter(|r| matches!(properties.get(*r), Some(SchemaNode::Text { .. })))
                    .map(String::as_str)
                    .collect(),
                _ => Vec::new(),
            };
            if required_text != [FEEDBACK_PROPERTY] {
                v.push(format!(
                    "open task schema needs exactly one required text property {FEEDBACK_PROPERTY:?}"
                ));
            }
        }
    }

    let params = &task.model_params;
    if !params.temperature.is_finite() || !crate::task::ModelParams::temperature_in_range(params.temperature) {
        v.push(format!("temperature out of [0, 2]: {}", params.temperature));
    }
    if params.max_output_tokens == 0 {
        v.push("max_output_tokens must be positive".to_owned());
    }
    if params.model_name.trim().is_empty() {
        v.push("model_name is empty".to_owned());
    }

    v
}

#[derive(Debug, Clone, Default)]
pub struct TaskRegistry {
    tasks: Vec<SuggestionTask>,
    index: HashMap<String, usize>,
}

impl TaskRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn with_builtins() -> Self {
        let mut reg = Self::empty();
        for task in catalog::builtin_tasks() {
            reg.register_task(task)
                .expect("built-in catalog is well formed");
        }
        reg
    }

    /// Built-ins plus every task in the optional definition file.
    pub fn load(task_file: Option<&Path>) -> Result<Self, RegistryError> {
        let mut reg = Self::with_builtins();
        if let Some(path) = task_file {
            reg.load_task_file(path)?;
        }
        Ok(reg)
    }

    pub fn register_task(&mut self, task: SuggestionTask) -> Result<(), RegistryError> {
        if self.index.contains_key(&task.task_id) {
            return Err(RegistryError::DuplicateTaskId(task.task_id));
        }
        let violations = check_task(&task);
        if !violations.is_empty() {
            return Err(RegistryError::InvalidTask {
                task_id: task.task_id,
                violations,
            });
        }
        self.index.insert(task.task_id.clone(), self.tasks.len());
        self.tasks.push(task);
        Ok(())
    }

    /// Registers the tasks of a JSON array document.
    pub fn load_task_file(&mut self, path: &Path) -> Result<usize, RegistryError> {
        let display = path.display().to_string();
        let text = fs::read_to_string(path).map_err(|source| RegistryError::Io {
            path: display.clone(),
            source,
        })?;
        let tasks: Vec<SuggestionTask> =
            serde_json::from_str(&text).map_err(|source| RegistryError::Parse {
                path: display,
                source,
            })?;
        let n = tasks.len();
        for task in tasks {
            self.register_task(task)?;
        }
        Ok(n)
    }

    pub fn get_task(&self, task_id: &str) -> Result<&SuggestionTask, RegistryError> {
        self.index
            .get(task_id)
            .map(|&i| &self.tasks[i])
            .ok_or_else(|| RegistryError::UnknownTask(task_id.to_owned()))
    }

    pub fn list_tasks(&self) -> &[SuggestionTask] {
        &self.tasks
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    /// Placeholder names in any registered template that do not name a field.
    pub fn unbound_placeholders(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for task in &self.tasks {
            for tpl in [&task.system_prompt_template, &task.user_prompt_template] {
                for name in template::placeholders(tpl) {
                    if task.field(name).is_none() {
                        out.push((task.task_id.clone(), name.to_owned()));
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::{FieldKind, FieldSpec, ModelParams, OutputSchema};

    fn unit_check() -> SuggestionTask {
        SuggestionTask {
            task_id: "unit-check".into(),
            title: "Unit check".into(),
            category: Category::OpenFeedback,
            system_prompt_template: "Check whether the label contains a unit.".into(),
            user_prompt_template: "{label}".into(),
            input_fields: vec![FieldSpec::new("label", true, FieldKind::ShortText, 200)],
            output_schema: OutputSchema::feedback("provide_feedback", "feedback"),
            max_suggestions: None,
            model_params: ModelParams::default(),
            request_json_instruction: false,
        }
    }

    #[test]
    fn builtin_catalog_shape() {
        let reg = TaskRegistry::with_builtins();
        assert_eq!(reg.len(), 8);
        let closed: Vec<_> = reg.list_tasks().iter().filter(|t| t.is_closed()).collect();
        assert_eq!(closed.len(), 4);
        assert!(closed.iter().all(|t| t.max_suggestions == Some(5)));
        assert!(reg.unbound_placeholders().is_empty());
    }

    #[test]
    fn register_custom_task_and_round_trip() {
        let mut reg = TaskRegistry::with_builtins();
        reg.register_task(unit_check()).unwrap();
        assert_eq!(reg.len(), 9);
        assert_eq!(reg.get_task("unit-check").unwrap(), &unit_check());
    }

    #[test]
    fn unbound_placeholder_rejected() {
        let mut task = unit_check();
        task.user_prompt_template = "{label} {abstract}".into();
        let err = TaskRegistry::empty().register_task(task).unwrap_err();
        match err {
            RegistryError::InvalidTask { violations, .. } => {
                assert_eq!(violations, vec!["unbound placeholder: abstract".to_owned()]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_rejected() {
        let mut reg = TaskRegistry::with_builtins();
        let dup = reg.get_task("related-predicates").unwrap().clone();
        assert!(matches!(
            reg.register_task(dup),
            Err(RegistryError::DuplicateTaskId(id)) if id == "related-predicates"
        ));
    }

    #[test]
    fn unknown_task() {
        let reg = TaskRegistry::with_builtins();
        assert!(matches!(
            reg.get_task("nonexistent"),
            Err(RegistryError::UnknownTask(_))
        ));
    }

    #[test]
    fn structural_violations_are_listed() {
        let mut task = unit_check();
        task.category = Category::ClosedRecommendation;
        task.max_suggestions = Some(11);
        task.input_fields.push(FieldSpec::new("Bad", true, FieldKind::ShortText, 0));
        task.model_params.temperature = 2.5;
        let v = check_task(&task);
        assert!(v.iter().any(|m| m.contains("max_suggestions")));
        assert!(v.iter().any(|m| m.contains("\"suggestions\"")));
        assert!(v.iter().any(|m| m.contains("invalid field name")));
        assert!(v.iter().any(|m| m.contains("max_chars")));
        assert!(v.iter().any(|m| m.contains("not referenced: Bad")));
        assert!(v.iter().any(|m| m.contains("temperature")));
    }

    #[test]
    fn required_field_must_be_referenced() {
        let mut task = unit_check();
        task.input_fields.push(FieldSpec::new("extra", true, FieldKind::ShortText, 10));
        assert_eq!(check_task(&task), vec!["required field not referenced: extra".to_owned()]);
        task.input_fields[1].required = false;
        assert!(check_task(&task).is_empty());
    }

    #[test]
    fn open_schema_must_have_single_feedback_text() {
        let mut task = unit_check();
        task.output_schema = OutputSchema::suggestions("f", "d");
        assert!(check_task(&task)
            .iter()
            .any(|m| m.contains("exactly one required text property")));
    }

    #[test]
    fn task_file_loads_json_array() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tasks.json");
        std::fs::write(&path, serde_json::to_string(&vec![unit_check()]).unwrap()).unwrap();
        let reg = TaskRegistry::load(Some(&path)).unwrap();
        assert_eq!(reg.len(), 9);
        assert_eq!(reg.get_task("unit-check").unwrap(), &unit_check());

        std::fs::write(&path, "{not json").unwrap();
        assert!(matches!(
            TaskRegistry::load(Some(&path)),
            Err(RegistryError::Parse { .. })
        ));
    }
}
