//! `{name}` placeholder templates.
//!
//! A placeholder is an opening brace, one or more characters from `[a-z_]`,
//! and a closing brace. Any other brace is literal text.

use std::collections::BTreeSet;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segment<'a> {
    Literal(&'a str),
    Placeholder(&'a str),
}

pub fn is_field_name(name: &str) -> bool {
    !name.is_empty() && name.bytes().all(|b| b.is_ascii_lowercase() || b == b'_')
}

/// Splits a template into literal and placeholder segments.
pub fn segments(template: &str) -> Vec<Segment<'_>> {
    let bytes = template.as_bytes();
    let mut out = Vec::new();
    let mut lit_start = 0;
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            if let Some(rel) = template[i + 1..].find('}') {
                let name = &template[i + 1..i + 1 + rel];
                if is_field_name(name) {
                    if lit_start < i {
                        out.push(Segment::Literal(&template[lit_start..i]));
                    }
                    out.push(Segment::Placeholder(name));
                    i += rel + 2;
                    lit_start = i;
                    continue;
                }
            }
        }
        i += 1;
    }
    if lit_start < bytes.len() {
        out.push(Segment::Literal(&template[lit_start..]));
    }
    out
}

pub fn placeholders(template: &str) -> BTreeSet<&str> {
    segments(template)
        .into_iter()
        .filter_map(|s| match s {
            Segment::Placeholder(name) => Some(name),
            Segment::Literal(_) => None,
        })
        .collect()
}

/// Substitutes placeholders. `lookup` returns `None` for absent values; an
/// absent value renders as nothing and the whitespace runs on either side of
/// it collapse into the one that precedes it (or disappear at the edges).
pub fn render<'a, F>(template: &'a str, mut lookup: F) -> String
where
    F: FnMut(&'a str) -> Option<String>,
{
    let mut out = String::with_capacity(template.len());
    let mut eat_leading_ws = false;
    let mut pending_ws = String::new();
    for seg in segments(template) {
        match seg {
            Segment::Literal(text) => {
                if eat_leading_ws {
                    let trimmed = text.trim_start();
                    if trimmed.is_empty() {
                        continue;
                    }
                    if !out.is_empty() {
                        out.push_str(&pending_ws);
                    }
                    pending_ws.clear();
                    eat_leading_ws = false;
                    out.push_str(trimmed);
                } else {
                    out.push_str(text);
                }
            }
            Segment::Placeholder(name) => match lookup(name) {
                Some(value) if !value.is_empty() => {
                    if eat_leading_ws {
                        if !out.is_empty() {
                            out.push_str(&pending_ws);
                        }
                        pending_ws.clear();
                        eat_leading_ws = false;
                    }
                    out.push_str(&value);
                }
                _ => {
                    if !eat_leading_ws {
                        let kept = out.trim_end().len();
                        pending_ws = out[kept..].to_owned();
                        out.truncate(kept);
                        eat_leading_ws = true;
                    }
                }
            },
        }
    }
    out
}
