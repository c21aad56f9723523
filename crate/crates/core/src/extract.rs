//! Lenient extraction of a JSON value from model output that may wrap it in
//! code fences or surround it with prose.

use serde_json::Value;

/// Contents of the first fenced code block, if any.
fn fenced(text: &str) -> Option<&str> {
    let start = text.find("```")?;
    let after = &text[start + 3..];
    let body_start = after.find('\n').map(|i| i + 1).unwrap_or(0);
    let body = &after[body_start..];
    let end = body.find("```").unwrap_or(body.len());
    Some(&body[..end])
}

/// Byte offset just past the bracket that closes the one at `start`.
fn balanced_end(text: &str, start: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in text[start..].char_indices() {
        if in_string {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '[' | '{' => depth += 1,
            ']' | '}' => {
                depth = depth.checked_sub(1)?;
                if depth == 0 {
                    return Some(start + i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

fn scan(text: &str) -> Option<Value> {
    for (i, c) in text.char_indices() {
        if c != '[' && c != '{' {
            continue;
        }
        if let Some(end) = balanced_end(text, i) {
            if let Ok(v) = serde_json::from_str(&text[i..end]) {
                return Some(v);
            }
        }
    }
    None
}

/// The first well-formed JSON array or object in `text`. A fenced code block
/// is searched before the surrounding text.
pub fn first_json(text: &str) -> Option<Value> {
    fenced(text).and_then(scan).or_else(|| scan(text))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn finds_json_in_fences_and_prose() {
        assert_eq!(first_json("```json\n[1, 2]\n```"), Some(json!([1, 2])));
        assert_eq!(
            first_json("Here you go: {\"a\": \"]\"} thanks"),
            Some(json!({"a": "]"}))
        );
        assert_eq!(first_json("see [note] then [3]"), Some(json!([3])));
        assert_eq!(first_json("no json here"), None);
        assert_eq!(first_json("[1, 2"), None);
    }
}
