use scraper::{Html, Selector};
use serde_json::Value;

use super::IngestError;
use crate::schema::{FieldMap, FIELD_DESC, FIELD_NAME, FIELD_PROVIDER, FIELD_SCALE, FIELD_TAGS, FIELD_TYPE, FIELD_URL};

/// Field maps from JSON-LD blocks plus the number of blocks that failed to
/// parse.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct JsonLdExtraction {
    pub records: Vec<FieldMap>,
    pub malformed_blocks: usize,
}

fn is_dataset_type(t: &Value) -> bool {
    let matches = |s: &str| {
        let last = s.rsplit(['/', ':', '#']).next().unwrap_or(s);
        last.eq_ignore_ascii_case("dataset")
    };
    match t {
        Value::String(s) => matches(s),
        Value::Array(items) => items.iter().filter_map(Value::as_str).any(matches),
        _ => false,
    }
}

/// Flattens a JSON-LD value to text: strings as-is, arrays comma-joined,
/// objects by their `name` (or `url`).
fn text_of(v: &Value) -> Option<String> {
    let s = match v {
        Value::String(s) => s.trim().to_string(),
        Value::Number(n) => n.to_string(),
        Value::Bool(b) => b.to_string(),
        Value::Array(items) => items.iter().filter_map(text_of).collect::<Vec<_>>().join(", "),
        Value::Object(o) => o.get("name").or_else(|| o.get("url")).and_then(text_of)?,
        Value::Null => return None,
    };
    (!s.is_empty()).then_some(s)
}

fn first_text(obj: &serde_json::Map<String, Value>, keys: &[&str]) -> Option<String> {
    keys.iter().find_map(|k| obj.get(*k).and_then(text_of))
}

fn dataset_fields(obj: &serde_json::Map<String, Value>) -> Option<FieldMap> {
    let mut m = FieldMap::new();
    let url = first_text(obj, &["url"]).or_else(|| {
        obj.get("@id")
            .and_then(Value::as_str)
            .filter(|s| s.starts_with("http://") || s.starts_with("https://"))
            .map(str::to_string)
    });
    let name = first_text(obj, &["name", "alternateName"]);
    if name.is_none() && url.is_none() {
        return None;
    }
    let format = first_text(obj, &["encodingFormat"]).or_else(|| {
        obj.get("distribution").and_then(|d| match d {
            Value::Array(items) => items.iter().find_map(|i| i.get("encodingFormat").and_then(text_of)),
            other => other.get("encodingFormat").and_then(text_of),
        })
    });
    let pairs = [
        (FIELD_NAME, name),
        (FIELD_DESC, first_text(obj, &["description", "abstract"])),
        (FIELD_URL, url),
        (FIELD_PROVIDER, first_text(obj, &["provider", "publisher", "creator"])),
        (FIELD_TAGS, first_text(obj, &["keywords"])),
        (FIELD_TYPE, format),
        (FIELD_SCALE, first_text(obj, &["contentSize", "size"])),
    ];
    for (k, v) in pairs {
        if let Some(v) = v {
            m.insert(k.to_string(), v);
        }
    }
    Some(m)
}

fn collect(v: &Value, out: &mut Vec<FieldMap>) {
    match v {
        Value::Array(items) => items.iter().for_each(|i| collect(i, out)),
        Value::Object(obj) => {
            if obj.get("@type").is_some_and(is_dataset_type) {
                if let Some(m) = dataset_fields(obj) {
                    out.push(m);
                }
            }
            if let Some(g) = obj.get("@graph") {
                collect(g, out);
            }
        }
        _ => {}
    }
}

/// Every schema.org `Dataset` object in the page's JSON-LD script blocks,
/// including those inside `@graph`. Blocks that are not valid JSON are
/// counted and skipped.
pub fn extract_jsonld_with_stats(html: &str) -> Result<JsonLdExtraction, IngestError> {
    if !html.contains('<') {
        return Err(IngestError::MalformedDocument("no markup found".into()));
    }
    let doc = Html::parse_document(html);
    let sel = Selector::parse("script").expect("static selector");
    let mut out = JsonLdExtraction::default();
    for script in doc.select(&sel) {
        let ty = script.value().attr("type").unwrap_or("");
        if !ty.trim().eq_ignore_ascii_case("application/ld+json") {
            continue;
        }
        let body: String = script.text().collect();
        match serde_json::from_str::<Value>(body.trim()) {
            Ok(v) => collect(&v, &mut out.records),
            Err(e) => {
                tracing::warn!("skipping malformed JSON-LD block: {e}");
                out.malformed_blocks += 1;
            }
        }
    }
    Ok(out)
}

pub fn extract_jsonld(html: &str) -> Result<Vec<FieldMap>, IngestError> {
    extract_jsonld_with_stats(html).map(|e| e.records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_and_organization() {
        let html = r#"<html><head>
<script type="application/ld+json">{"@context":"https://schema.org","@type":"Dataset","name":"Rain Gauges","description":"Hourly rainfall.","url":"https://r.org/d","keywords":["rain","hydrology"],"publisher":{"@type":"Organization","name":"Met Office"}}</script>
<script type="application/ld+json">{"@type":"Organization","name":"Met Office"}</script>
<script type="application/ld+json">{not json</script>
</head><body></body></html>"#;
        let out = extract_jsonld_with_stats(html).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.malformed_blocks, 1);
        let m = &out.records[0];
        assert_eq!(m[FIELD_NAME], "Rain Gauges");
        assert_eq!(m[FIELD_URL], "https://r.org/d");
        assert_eq!(m[FIELD_TAGS], "rain, hydrology");
        assert_eq!(m[FIELD_PROVIDER], "Met Office");
    }

    #[test]
    fn graph_and_type_arrays() {
        let html = r#"<script type="application/ld+json">{"@graph":[{"@type":["schema:Dataset"],"name":"A"},{"@type":"WebPage","name":"B"},{"@type":"Dataset","description":"nameless"}]}</script>"#;
        let out = extract_jsonld(html).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0][FIELD_NAME], "A");
    }

    #[test]
    fn no_blocks_and_no_markup() {
        assert!(extract_jsonld("<html><body>hi</body></html>").unwrap().is_empty());
        assert!(matches!(extract_jsonld("plain text"), Err(IngestError::MalformedDocument(_))));
    }
}
