//! Optional metadata header line for JSONL files.
//!
//! A JSONL file may start with a single object whose only key is
//! [`META_KEY`]. Readers skip it; writers use it to record provenance.

use serde_json::Value;

pub const META_KEY: &str = "_meta";

/// The metadata payload if `line` is a header line.
pub fn parse_meta_line(line: &str) -> Option<Value> {
    let trimmed = line.trim_start();
    if !trimmed.starts_with('{') || !trimmed.contains(META_KEY) {
        return None;
    }
    match serde_json::from_str::<Value>(trimmed).ok()? {
        Value::Object(mut map) if map.len() == 1 => map.remove(META_KEY),
        _ => None,
    }
}

/// Serializes `meta` as a header line, without the trailing newline.
pub fn meta_line(meta: &Value) -> String {
    let mut map = serde_json::Map::new();
    map.insert(META_KEY.to_string(), meta.clone());
    Value::Object(map).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_round_trip() {
        let meta = serde_json::json!({"seed": 3, "label_order": ["weakener", "strengthener"]});
        assert_eq!(parse_meta_line(&meta_line(&meta)), Some(meta));
        assert_eq!(parse_meta_line(r#"{"_meta": 1, "id": "x"}"#), None);
        assert_eq!(parse_meta_line(r#"{"id": "_meta"}"#), None);
        assert_eq!(parse_meta_line("not json"), None);
    }
}
