use proptest::prelude::*;
use serde_json::{json, Value};

use smart_suggest_core::parser::clean_labels;
use smart_suggest_core::template;
use smart_suggest_core::{
    extract_json_lenient, parse_result, render_prompt, Category, InputValue, Inputs, PromptHash, Provenance,
    RawProviderResponse, SuggestionTask, TaskRegistry,
};

fn task(id: &str) -> SuggestionTask {
    TaskRegistry::with_builtins().get_task(id).unwrap().clone()
}

fn prov() -> Provenance {
    Provenance {
        model_name: "m".into(),
        prompt_hash: PromptHash::compute("t", "s", "u"),
        latency_ms: 0,
        attempt: 1,
    }
}

/// Earliest opening bracket at which some substring parses.
fn brute_force(text: &str) -> Option<Value> {
    let idx: Vec<usize> = text.char_indices().map(|(i, _)| i).chain([text.len()]).collect();
    for (a, &s) in idx.iter().enumerate() {
        if text[s..].starts_with(['{', '[']) {
            for &e in &idx[a + 1..] {
                if let Ok(v) = serde_json::from_str(&text[s..e]) {
                    return Some(v);
                }
            }
        }
    }
    None
}

fn label() -> impl Strategy<Value = String> {
    "[ a-zA-Z0-9\\-]{0,24}"
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn lenient_matches_brute_force(text in "[ a-z0-9{}\\[\\]\":,.\\\\]{0,40}") {
        prop_assert_eq!(extract_json_lenient(&text), brute_force(&text));
    }

    #[test]
    fn lenient_finds_embedded_payload(
        prefix in "[ a-zA-Z.,!]{0,30}",
        suffix in "[ a-zA-Z.,!{}\\[\\]]{0,30}",
        labels in prop::collection::vec(label(), 0..8),
    ) {
        let payload = json!({ "suggestions": labels });
        let text = format!("{prefix}{payload}{suffix}");
        prop_assert_eq!(extract_json_lenient(&text), Some(payload));
    }

    #[test]
    fn parser_never_panics(payload in any::<String>(), tool in any::<bool>(), closed in any::<bool>()) {
        let t = task(if closed { "related-predicates" } else { "literal-applicability" });
        let raw = if tool { RawProviderResponse::tool_call(payload) } else { RawProviderResponse::content_text(payload) };
        let _ = parse_result(&t, &raw, prov());
    }

    #[test]
    fn text_path_agrees_with_tool_path(
        labels in prop::collection::vec(label(), 0..10),
        prefix in "(Sure, I can do that\\. )?[a-z ]{0,10}",
    ) {
        let t = task("related-objects-method");
        let args = json!({ "suggestions": labels }).to_string();
        let direct = parse_result(&t, &RawProviderResponse::tool_call(args.clone()), prov());
        let extracted = parse_result(&t, &RawProviderResponse::content_text(format!("{prefix}{args}")), prov());
        match (direct, extracted) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(a.items, b.items);
                prop_assert_eq!(a.notes, b.notes);
            }
            (Err(a), Err(b)) => prop_assert_eq!(a.to_string(), b.to_string()),
            (a, b) => prop_assert!(false, "paths disagree: {:?} vs {:?}", a, b),
        }
    }

    #[test]
    fn clean_labels_invariants(raw in prop::collection::vec("[ aAbB]{0,6}", 0..12), max in 1usize..8) {
        let mut notes = Vec::new();
        let items = clean_labels(raw.iter().map(String::as_str), max, &mut notes);
        prop_assert!(items.len() <= max);
        let lowered: std::collections::BTreeSet<String> = items.iter().map(|i| i.label.to_lowercase()).collect();
        prop_assert_eq!(lowered.len(), items.len());
        for (i, item) in items.iter().enumerate() {
            prop_assert_eq!(item.rank as usize, i + 1);
            prop_assert!(!item.label.is_empty());
            prop_assert_eq!(item.label.trim(), item.label.as_str());
        }
        // cleaning is idempotent
        let again = clean_labels(items.iter().map(|i| i.label.as_str()), max, &mut Vec::new());
        prop_assert_eq!(again, items);
    }

    #[test]
    fn rendered_prompts_keep_template_text(
        title in "[A-Za-z][A-Za-z ]{0,40}",
        abs in proptest::option::of("[A-Za-z][A-Za-z .]{0,80}"),
        label in "[A-Za-z][A-Za-z ]{0,30}",
        preds in prop::collection::vec("[a-z][a-z ]{0,12}", 1..5),
    ) {
        for t in TaskRegistry::with_builtins().list_tasks() {
            let mut inputs = Inputs::new();
            inputs.insert("title".into(), InputValue::Text(title.clone()));
            if let Some(a) = &abs {
                inputs.insert("abstract".into(), InputValue::Text(a.clone()));
            }
            inputs.insert("label".into(), InputValue::Text(label.clone()));
            inputs.insert("description".into(), InputValue::Text(label.clone()));
            inputs.insert("predicates".into(), InputValue::List(preds.clone()));
            inputs.retain(|k, _| t.field(k).is_some());
            let b = render_prompt(t, &inputs, 3000).unwrap();
            prop_assert!(b.system_message.starts_with(&t.system_prompt_template));
            for seg in template::segments(&t.user_prompt_template) {
                if let template::Segment::Literal(lit) = seg {
                    prop_assert!(b.user_message.contains(lit.trim()));
                }
            }
            prop_assert_eq!(b.force_tool, t.category == Category::ClosedRecommendation);
            prop_assert_eq!(b.prompt_hash.as_str().len(), 32);
            let again = render_prompt(t, &inputs, 3000).unwrap();
            prop_assert_eq!(again.prompt_hash, b.prompt_hash);
        }
    }
}
