//! The built-in task catalog.
//!
//! Prompt texts are kept exactly as published, typos included.

use crate::task::{Category, FieldKind, FieldSpec, ModelParams, OutputSchema, SuggestionTask};

pub const RELATED_PREDICATES: &str = "related-predicates";
pub const RELATED_OBJECTS_RESEARCH_PROBLEM: &str = "related-objects-research-problem";
pub const RELATED_OBJECTS_METHOD: &str = "related-objects-method";
pub const RELATED_OBJECTS_APPROACH: &str = "related-objects-approach";
pub const LITERAL_APPLICABILITY: &str = "literal-applicability";
pub const DECOMPOSABLE_RESOURCES: &str = "decomposable-resources";
pub const PREDICATE_REUSABILITY: &str = "predicate-reusability";
pub const COMPARISON_DESCRIPTIVENESS: &str = "comparison-descriptiveness";

/// Upper bound on the size of any single built-in input field.
pub const MAX_FIELD_CHARS: usize = 10_000;
const MAX_TITLE_CHARS: usize = 1_000;
const BUILTIN_MAX_SUGGESTIONS: u32 = 5;

const RELATED_PREDICATES_SYSTEM: &str = "You are an assistant for building a knowledge graph for science. Your task is to recommend additional related predicates based on the set of existing predicates. Recommend a list maximum 5 additional predicates.";
const RELATED_PREDICATES_USER: &str = "The existing predicates are: {predicates}";

/// `[research problem]` is the predicate slot, filled per variant.
const RELATED_OBJECTS_SYSTEM: &str = "A [research problem] contains a maximum of approximately 4 words to explain the research task or topic of a paper. Provide a list of maximum 5 research problems based on the title and optionally abstract provided by the user.";
const RELATED_OBJECTS_PREDICATE_SLOT: &str = "[research problem]";
const RELATED_OBJECTS_USER: &str = "{title}\n{abstract}";

const LITERAL_APPLICABILITY_SYSTEM: &str = "You are an assistant in building a knowledge graph for science. You task is to advice users whether they should use a RDF resource or RDF literal. Based on a user-provided label, advice whether the type should be 'literal' or 'resource'. Literals are generally larger pieces of text and are not reusable, resource are atomic and can be reused.";
const DECOMPOSABLE_RESOURCES_SYSTEM: &str = "You are an assistant for building a knowledge graph for science. Provide advice on if and how to decompose a provided resource label into separate resources. Only provide feedback is decomposing makes sense.";
const PREDICATE_REUSABILITY_SYSTEM: &str = "You are an assistant in building a knowledge graph for science. Provide feedback whether the provided predicate label is generic enough to make it reusable in the graph and explain how to make it more generic. Examples of properties that are not reusable: population in Berlin (because it contains a location), temperature in degrees Celsius (because it contains a unit).";
const COMPARISON_DESCRIPTIVENESS_SYSTEM: &str = "Provide feedback to a user on how to improve a provided description text. The description text should give information about the objectives and topics of a scientific tabular related work overview.";
const LABEL_USER: &str = "{label}";
const DESCRIPTION_USER: &str = "{description}";

fn closed(
    task_id: &str,
    title: &str,
    system: String,
    user: &str,
    input_fields: Vec<FieldSpec>,
    function_name: &str,
) -> SuggestionTask {
    SuggestionTask {
        task_id: task_id.to_owned(),
        title: title.to_owned(),
        category: Category::ClosedRecommendation,
        system_prompt_template: system,
        user_prompt_template: user.to_owned(),
        input_fields,
        output_schema: OutputSchema::suggestions(
            function_name,
            "Return the recommended values as a list of short strings",
        ),
        max_suggestions: Some(BUILTIN_MAX_SUGGESTIONS),
        model_params: ModelParams::default(),
        request_json_instruction: false,
    }
}

fn open(task_id: &str, title: &str, system: &str, user: &str, field: FieldSpec) -> SuggestionTask {
    SuggestionTask {
        task_id: task_id.to_owned(),
        title: title.to_owned(),
        category: Category::OpenFeedback,
        system_prompt_template: system.to_owned(),
        user_prompt_template: user.to_owned(),
        input_fields: vec![field],
        output_schema: OutputSchema::feedback(
            "provide_feedback",
            "Return the feedback for the user as text",
        ),
        max_suggestions: None,
        model_params: ModelParams::default(),
        request_json_instruction: true,
    }
}

fn related_objects(task_id: &str, title: &str, predicate: &str) -> SuggestionTask {
    closed(
        task_id,
        title,
        RELATED_OBJECTS_SYSTEM.replacen(RELATED_OBJECTS_PREDICATE_SLOT, predicate, 1),
        RELATED_OBJECTS_USER,
        vec![
            FieldSpec::new("title", true, FieldKind::ShortText, MAX_TITLE_CHARS),
            FieldSpec::new("abstract", false, FieldKind::LongText, MAX_FIELD_CHARS),
        ],
        "recommend_values",
    )
}

fn label_field() -> FieldSpec {
    FieldSpec::new("label", true, FieldKind::ShortText, MAX_FIELD_CHARS)
}

/// The eight built-in tasks: four closed recommendations followed by four
/// open feedback tasks.
pub fn builtin_tasks() -> Vec<SuggestionTask> {
    vec![
        closed(
            RELATED_PREDICATES,
            "Related predicates",
            RELATED_PREDICATES_SYSTEM.to_owned(),
            RELATED_PREDICATES_USER,
            vec![FieldSpec::new(
                "predicates",
                true,
                FieldKind::StringList,
                MAX_FIELD_CHARS,
            )],
            "recommend_predicates",
        ),
        related_objects(
            RELATED_OBJECTS_RESEARCH_PROBLEM,
            "Related research problems",
            "research problem",
        ),
        related_objects(RELATED_OBJECTS_METHOD, "Related methods", "method"),
        related_objects(RELATED_OBJECTS_APPROACH, "Related approaches", "approach"),
        open(
            LITERAL_APPLICABILITY,
            "Literal applicability",
            LITERAL_APPLICABILITY_SYSTEM,
            LABEL_USER,
            label_field(),
        ),
        open(
            DECOMPOSABLE_RESOURCES,
            "Decomposable resources",
            DECOMPOSABLE_RESOURCES_SYSTEM,
            LABEL_USER,
            label_field(),
        ),
        open(
            PREDICATE_REUSABILITY,
            "Predicate reusability",
            PREDICATE_REUSABILITY_SYSTEM,
            LABEL_USER,
            label_field(),
        ),
        open(
            COMPARISON_DESCRIPTIVENESS,
            "Comparison descriptiveness",
            COMPARISON_DESCRIPTIVENESS_SYSTEM,
            DESCRIPTION_USER,
            FieldSpec::new("description", true, FieldKind::LongText, MAX_FIELD_CHARS),
        ),
    ]
}
