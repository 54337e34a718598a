//! Structured-output schemas for event signatures.
//!
//! [`render_signature_schema`] compiles one event signature into a JSON
//! Schema document handed to the LLM for constrained decoding.
//! [`check_value`] validates a decoded reply against such a schema and
//! returns human-readable errors that feed the gateway's repair loop. The
//! checker intentionally covers only the schema subset this module emits.

use serde_json::{json, Map, Value};

use crate::codebook::{Codebook, DomainKind, EventSignature};

/// Which fields of a signature to compile into the schema.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldFilter {
    All,
    /// Non-entity roles only; entity roles are owned by the linking stage.
    NonEntity,
}

/// Compile the schema for event type `t`. Output is deterministic
/// byte-for-byte: property order follows the signature, and all keys are
/// emitted in a fixed order.
pub fn render_signature_schema(
    cb: &Codebook,
    t: &str,
    filter: FieldFilter,
) -> Result<String, String> {
    let sig = cb.signature(t).ok_or_else(|| format!("unknown event type {t:?}"))?;
    Ok(serde_json::to_string_pretty(&signature_schema_value(sig, filter))
        .expect("schema serialization cannot fail"))
}

pub fn signature_schema_value(sig: &EventSignature, filter: FieldFilter) -> Value {
    let mut properties = Map::new();
    let mut required = Vec::new();
    for field in &sig.fields {
        if filter == FieldFilter::NonEntity && field.is_entity_field {
            continue;
        }
        let mut prop = match field.kind {
            DomainKind::Boolean => json!({ "type": "boolean" }),
            DomainKind::Integer => json!({ "type": "integer", "minimum": 0 }),
            DomainKind::Text => json!({ "type": "string" }),
            DomainKind::Categorical => json!({ "type": "string", "enum": field.options }),
            DomainKind::CategoricalSet => json!({
                "type": "array",
                "items": { "type": "string", "enum": field.options },
                "uniqueItems": true
            }),
            DomainKind::EntitySet => json!({
                "type": "array",
                "items": { "type": "string" },
                "uniqueItems": true
            }),
            DomainKind::Location => json!({
                "type": "object",
                "properties": {
                    "country": { "type": "string" },
                    "address": { "type": "string" }
                },
                "required": ["country", "address"],
                "additionalProperties": false
            }),
        };
        if field.nullable {
            let obj = prop.as_object_mut().expect("property is an object");
            let base = obj.get("type").cloned().expect("property has a type");
            obj.insert("type".into(), json!([base, "null"]));
        }
        let obj = prop.as_object_mut().expect("property is an object");
        obj.insert("description".into(), json!(field.description));
        properties.insert(field.name.clone(), prop);
        required.push(field.name.clone());
    }
    json!({
        "title": sig.type_name,
        "type": "object",
        "properties": properties,
        "required": required,
        "additionalProperties": false
    })
}

/// Validate `value` against a schema produced by this module. Returns every
/// violation found, each prefixed with a JSON-pointer-style path.
pub fn check_value(value: &Value, schema: &Value) -> Vec<String> {
    let mut errors = Vec::new();
    check_at(value, schema, "$", &mut errors);
    errors
}

fn check_at(value: &Value, schema: &Value, path: &str, errors: &mut Vec<String>) {
    let Some(schema) = schema.as_object() else {
        errors.push(format!("{path}: schema node is not an object"));
        return;
    };

    if let Some(expected) = schema.get("type") {
        if !type_matches(value, expected) {
            errors.push(format!(
                "{path}: expected type {}, got {}",
                expected,
                json_type_name(value)
            ));
            return;
        }
    }
    if value.is_null() {
        // Permitted via the type clause above; nothing further to check.
        return;
    }

    if let Some(allowed) = schema.get("enum").and_then(Value::as_array) {
        if !allowed.contains(value) {
            errors.push(format!("{path}: value {value} is not one of the allowed options"));
        }
    }
    if let Some(min) = schema.get("minimum").and_then(Value::as_i64) {
        if let Some(n) = value.as_i64() {
            if n < min {
                errors.push(format!("{path}: value {n} is below the minimum {min}"));
            }
        }
    }

    if let Some(arr) = value.as_array() {
        if let Some(items) = schema.get("items") {
            for (i, item) in arr.iter().enumerate() {
                check_at(item, items, &format!("{path}[{i}]"), errors);
            }
        }
        if schema.get("uniqueItems").and_then(Value::as_bool) == Some(true) {
            for (i, item) in arr.iter().enumerate() {
                if arr[..i].contains(item) {
                    errors.push(format!("{path}[{i}]: duplicate item {item}"));
                }
            }
        }
    }

    if let Some(obj) = value.as_object() {
        let props = schema.get("properties").and_then(Value::as_object);
        if let Some(required) = schema.get("required").and_then(Value::as_array) {
            for key in required.iter().filter_map(Value::as_str) {
                if !obj.contains_key(key) {
                    errors.push(format!("{path}: missing required property {key:?}"));
                }
            }
        }
        for (key, val) in obj {
            match props.and_then(|p| p.get(key)) {
                Some(sub) => check_at(val, sub, &format!("{path}.{key}"), errors),
                None => {
                    if schema.get("additionalProperties").and_then(Value::as_bool) == Some(false) {
                        errors.push(format!("{path}: unexpected property {key:?}"));
                    }
                }
            }
        }
    }
}

fn type_matches(value: &Value, expected: &Value) -> bool {
    match expected {
        Value::String(name) => single_type_matches(value, name),
        Value::Array(names) => names
            .iter()
            .filter_map(Value::as_str)
            .any(|name| single_type_matches(value, name)),
        _ => false,
    }
}

fn single_type_matches(value: &Value, name: &str) -> bool {
    match name {
        "null" => value.is_null(),
        "boolean" => value.is_boolean(),
        "integer" => value.as_i64().is_some() || value.as_u64().is_some(),
        "number" => value.is_number(),
        "string" => value.is_string(),
        "array" => value.is_array(),
        "object" => value.is_object(),
        _ => false,
    }
}

fn json_type_name(value: &Value) -> &'static str {
    match value {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::parse_codebook;

    fn cb() -> Codebook {
        parse_codebook(
            &json!({
                "version": "t",
                "event_types": [{
                    "name": "Demo", "description": "d",
                    "fields": [
                        {"name": "location", "description": "where", "kind": "location"},
                        {"name": "fatalities", "description": "count", "kind": "integer", "nullable": true},
                        {"name": "tone", "description": "tone", "kind": "categorical_set", "options": ["A", "B"]},
                        {"name": "actors", "description": "who", "kind": "entity_set", "is_entity_field": true}
                    ]
                }]
            })
            .to_string(),
        )
        .unwrap()
        .codebook
    }

    #[test]
    fn schema_is_deterministic() {
        let cb = cb();
        let a = render_signature_schema(&cb, "Demo", FieldFilter::All).unwrap();
        let b = render_signature_schema(&cb, "Demo", FieldFilter::All).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn non_entity_filter_drops_entity_roles() {
        let cb = cb();
        let raw = render_signature_schema(&cb, "Demo", FieldFilter::NonEntity).unwrap();
        let schema: Value = serde_json::from_str(&raw).unwrap();
        let props = schema["properties"].as_object().unwrap();
        let keys: Vec<_> = props.keys().map(String::as_str).collect();
        assert_eq!(keys, ["location", "fatalities", "tone"]);
    }

    #[test]
    fn checker_accepts_valid_and_flags_violations() {
        let cb = cb();
        let raw = render_signature_schema(&cb, "Demo", FieldFilter::All).unwrap();
        let schema: Value = serde_json::from_str(&raw).unwrap();

        let good = json!({
            "location": {"country": "Iraq", "address": "Mosul, Nineveh, Iraq"},
            "fatalities": null,
            "tone": ["A"],
            "actors": ["Women"]
        });
        assert!(check_value(&good, &schema).is_empty());

        let bad = json!({
            "location": {"country": "Iraq", "address": "Mosul"},
            "fatalities": -3,
            "tone": ["C", "C"],
            "actors": "Women",
            "extra": 1
        });
        let errors = check_value(&bad, &schema);
        assert!(errors.iter().any(|e| e.contains("below the minimum")), "{errors:?}");
        assert!(errors.iter().any(|e| e.contains("not one of the allowed")), "{errors:?}");
        assert!(errors.iter().any(|e| e.contains("duplicate item")), "{errors:?}");
        assert!(errors.iter().any(|e| e.contains("expected type")), "{errors:?}");
        assert!(errors.iter().any(|e| e.contains("unexpected property")), "{errors:?}");
    }
}
