//! Locating JSON documents inside free-form model output.

use serde_json::{Map, Value};

/// The whole text, trimmed, as a JSON object.
pub fn whole_object(text: &str) -> Option<Map<String, Value>> {
    match serde_json::from_str(text.trim()) {
        Ok(Value::Object(map)) => Some(map),
        _ => None,
    }
}

/// Bodies of all fenced code blocks, in order. The info string after the opening
/// fence is dropped; an unterminated final fence runs to the end of the text.
pub fn fenced_blocks(text: &str) -> Vec<&str> {
    let mut blocks = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        let line_end = after.find('\n').unwrap_or(after.len());
        // ```{...}``` on one line carries no info string.
        if let Some(close) = after[..line_end].find("```") {
            blocks.push(&after[..close]);
            rest = &after[close + 3..];
            continue;
        }
        let body = &after[(line_end + 1).min(after.len())..];
        match body.find("```") {
            Some(close) => {
                blocks.push(&body[..close]);
                rest = &body[close + 3..];
            }
            None => {
                blocks.push(body);
                break;
            }
        }
    }
    blocks
}

/// The last fenced block, parsed as a JSON object.
pub fn last_fenced_object(text: &str) -> Option<Map<String, Value>> {
    fenced_blocks(text).last().and_then(|b| whole_object(b))
}

/// End (exclusive byte offset) of the balanced brace object starting at `start`,
/// honouring JSON string quoting.
fn balanced_end(text: &str, start: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in text[start..].char_indices() {
        if in_string {
            match (escaped, c) {
                (true, _) => escaped = false,
                (false, '\\') => escaped = true,
                (false, '"') => in_string = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(start + i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

/// The balanced `{...}` object that ends last in the text and has `key` at its top level.
pub fn last_object_with_key(text: &str, key: &str) -> Option<Map<String, Value>> {
    let quoted = format!("\"{key}\"");
    let mut spans: Vec<(usize, usize)> = text
        .char_indices()
        .filter(|&(_, c)| c == '{')
        .filter_map(|(start, _)| balanced_end(text, start).map(|end| (start, end)))
        .filter(|&(s, e)| text[s..e].contains(&quoted))
        .collect();
    spans.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    spans
        .into_iter()
        .find_map(|(s, e)| match serde_json::from_str(&text[s..e]) {
            Ok(Value::Object(map)) if map.contains_key(key) => Some(map),
            _ => None,
        })
}
