//! Event ontology: codebooks, signatures, argument domains, and instance
//! validation.
//!
//! A codebook declares the event types a corpus is annotated with, the
//! argument fields of each type, and the domain every field draws its values
//! from. Codebooks are plain data (JSON on disk), so the rest of the engine
//! stays ontology-agnostic. Abstract groups exist only to share fields
//! between related types; they are flattened away at load time and are never
//! valid event types themselves.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

/// The value space of one argument field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArgumentDomain {
    pub kind: DomainKind,
    /// Category labels; non-empty exactly when `kind` is categorical.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub options: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    Boolean,
    /// Nonnegative count.
    Integer,
    Text,
    Categorical,
    CategoricalSet,
    EntitySet,
    Location,
}

impl fmt::Display for DomainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DomainKind::Boolean => "boolean",
            DomainKind::Integer => "integer",
            DomainKind::Text => "text",
            DomainKind::Categorical => "categorical",
            DomainKind::CategoricalSet => "categorical_set",
            DomainKind::EntitySet => "entity_set",
            DomainKind::Location => "location",
        };
        f.write_str(s)
    }
}

/// One argument field of an event signature.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArgumentField {
    pub name: String,
    pub description: String,
    pub kind: DomainKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub options: Vec<String>,
    #[serde(default)]
    pub is_entity_field: bool,
    #[serde(default)]
    pub nullable: bool,
}

impl ArgumentField {
    pub fn domain(&self) -> ArgumentDomain {
        ArgumentDomain { kind: self.kind, options: self.options.clone() }
    }
}

/// A concrete event type with its flattened, ordered field list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventSignature {
    pub type_name: String,
    pub description: String,
    /// Abstract group this type was declared under, if any. Informational.
    pub parent: Option<String>,
    pub fields: Vec<ArgumentField>,
}

impl EventSignature {
    pub fn field(&self, role: &str) -> Option<&ArgumentField> {
        self.fields.iter().find(|f| f.name == role)
    }

    /// Roles whose domain is a set of entities, in signature order.
    pub fn entity_fields(&self) -> impl Iterator<Item = &ArgumentField> {
        self.fields.iter().filter(|f| f.is_entity_field)
    }

    pub fn non_entity_fields(&self) -> impl Iterator<Item = &ArgumentField> {
        self.fields.iter().filter(|f| !f.is_entity_field)
    }
}

/// A validated codebook: concrete signatures only, abstract groups dissolved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Codebook {
    pub version: String,
    pub signatures: Vec<EventSignature>,
}

impl Codebook {
    pub fn signature(&self, type_name: &str) -> Option<&EventSignature> {
        self.signatures.iter().find(|s| s.type_name == type_name)
    }

    pub fn type_names(&self) -> impl Iterator<Item = &str> {
        self.signatures.iter().map(|s| s.type_name.as_str())
    }

    /// Position of a type in codebook order; used for deterministic tie-breaks.
    pub fn type_rank(&self, type_name: &str) -> Option<usize> {
        self.signatures.iter().position(|s| s.type_name == type_name)
    }
}

#[derive(Debug, Error)]
pub enum CodebookError {
    #[error("failed to read codebook file: {0}")]
    Io(#[from] std::io::Error),
    #[error("codebook parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("empty codebook: no event types declared")]
    Empty,
    #[error("empty codebook: no concrete event types (all entries abstract)")]
    NoConcreteTypes,
    #[error("duplicate type name {0:?}")]
    DuplicateTypeName(String),
    #[error("type {child:?} references unknown parent {parent:?}")]
    UnknownParent { child: String, parent: String },
    #[error("parent chain of {0:?} contains a cycle")]
    ParentCycle(String),
    #[error("type {child:?} has concrete parent {parent:?}; parents must be abstract")]
    ConcreteParent { child: String, parent: String },
    #[error("abstract type {0:?} has no children")]
    AbstractWithoutChildren(String),
    #[error("type {type_name:?} declares duplicate field {field:?} after flattening")]
    DuplicateField { type_name: String, field: String },
    #[error("field {field:?} of {type_name:?}: {reason}")]
    BadField { type_name: String, field: String, reason: String },
    #[error("type {0:?} has no fields")]
    EmptySignature(String),
    #[error("type {type_name:?} must declare exactly one location field, found {found}")]
    LocationFieldCount { type_name: String, found: usize },
}

/// On-disk codebook layout.
#[derive(Debug, Serialize, Deserialize)]
struct CodebookFile {
    version: String,
    event_types: Vec<TypeEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TypeEntry {
    name: String,
    #[serde(default)]
    description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    parent: Option<String>,
    #[serde(rename = "abstract", default, skip_serializing_if = "std::ops::Not::not")]
    is_abstract: bool,
    #[serde(default)]
    fields: Vec<ArgumentField>,
}

/// Result of loading a codebook: the validated book plus non-fatal warnings.
#[derive(Debug)]
pub struct LoadedCodebook {
    pub codebook: Codebook,
    pub warnings: Vec<String>,
}

pub fn load_codebook(path: impl AsRef<Path>) -> Result<LoadedCodebook, CodebookError> {
    let raw = std::fs::read_to_string(path)?;
    parse_codebook(&raw)
}

pub fn parse_codebook(raw: &str) -> Result<LoadedCodebook, CodebookError> {
    let file: CodebookFile = serde_json::from_str(raw)?;
    if file.event_types.is_empty() {
        return Err(CodebookError::Empty);
    }

    let mut seen = BTreeSet::new();
    for entry in &file.event_types {
        if !seen.insert(entry.name.clone()) {
            return Err(CodebookError::DuplicateTypeName(entry.name.clone()));
        }
    }

    let by_name: BTreeMap<&str, &TypeEntry> =
        file.event_types.iter().map(|e| (e.name.as_str(), e)).collect();

    let mut warnings = Vec::new();
    let mut signatures = Vec::new();
    let mut parents_used: BTreeSet<&str> = BTreeSet::new();

    for entry in &file.event_types {
        if entry.is_abstract {
            continue;
        }
        // Walk the parent chain, collecting inherited fields topmost-first.
        let mut chain = vec![entry];
        let mut cursor = entry;
        while let Some(parent_name) = &cursor.parent {
            let parent =
                *by_name.get(parent_name.as_str()).ok_or_else(|| CodebookError::UnknownParent {
                    child: cursor.name.clone(),
                    parent: parent_name.clone(),
                })?;
            if !parent.is_abstract {
                return Err(CodebookError::ConcreteParent {
                    child: cursor.name.clone(),
                    parent: parent_name.clone(),
                });
            }
            if chain.iter().any(|e| e.name == parent.name) {
                return Err(CodebookError::ParentCycle(entry.name.clone()));
            }
            parents_used.insert(parent.name.as_str());
            chain.push(parent);
            cursor = parent;
        }
        chain.reverse();

        let mut fields = Vec::new();
        let mut field_names = BTreeSet::new();
        for link in &chain {
            for field in &link.fields {
                if !field_names.insert(field.name.clone()) {
                    return Err(CodebookError::DuplicateField {
                        type_name: entry.name.clone(),
                        field: field.name.clone(),
                    });
                }
                validate_field(&entry.name, field)?;
                if field.description.is_empty() {
                    warnings.push(format!(
                        "field {:?} of {:?} has an empty description",
                        field.name, entry.name
                    ));
                }
                fields.push(field.clone());
            }
        }
        if fields.is_empty() {
            return Err(CodebookError::EmptySignature(entry.name.clone()));
        }
        let locations = fields.iter().filter(|f| f.kind == DomainKind::Location).count();
        if locations != 1 {
            return Err(CodebookError::LocationFieldCount {
                type_name: entry.name.clone(),
                found: locations,
            });
        }
        if entry.description.is_empty() {
            warnings.push(format!("event type {:?} has an empty description", entry.name));
        }
        signatures.push(EventSignature {
            type_name: entry.name.clone(),
            description: entry.description.clone(),
            parent: entry.parent.clone(),
            fields,
        });
    }

    for entry in &file.event_types {
        if entry.is_abstract && !parents_used.contains(entry.name.as_str()) {
            return Err(CodebookError::AbstractWithoutChildren(entry.name.clone()));
        }
    }
    if signatures.is_empty() {
        return Err(CodebookError::NoConcreteTypes);
    }

    Ok(LoadedCodebook { codebook: Codebook { version: file.version, signatures }, warnings })
}

fn validate_field(type_name: &str, field: &ArgumentField) -> Result<(), CodebookError> {
    let bad = |reason: String| CodebookError::BadField {
        type_name: type_name.to_string(),
        field: field.name.clone(),
        reason,
    };
    let categorical =
        matches!(field.kind, DomainKind::Categorical | DomainKind::CategoricalSet);
    if categorical && field.options.is_empty() {
        return Err(bad(format!("kind {} requires non-empty options", field.kind)));
    }
    if !categorical && !field.options.is_empty() {
        return Err(bad(format!("kind {} must not declare options", field.kind)));
    }
    let mut labels = BTreeSet::new();
    for label in &field.options {
        if !labels.insert(label) {
            return Err(bad(format!("duplicate category label {label:?}")));
        }
    }
    if field.is_entity_field != (field.kind == DomainKind::EntitySet) {
        return Err(bad("is_entity_field must be set exactly for entity_set fields".into()));
    }
    Ok(())
}

/// Serialize a codebook back to the on-disk layout.
///
/// Abstract groups were dissolved at load time, so each referenced parent is
/// re-emitted as an empty abstract entry and every concrete type carries its
/// full flattened field list. Reloading the output yields an equal codebook.
pub fn write_codebook(cb: &Codebook) -> String {
    let mut entries = Vec::new();
    let mut seen_parents = BTreeSet::new();
    for sig in &cb.signatures {
        if let Some(parent) = &sig.parent {
            if seen_parents.insert(parent.clone()) {
                entries.push(TypeEntry {
                    name: parent.clone(),
                    description: String::new(),
                    parent: None,
                    is_abstract: true,
                    fields: Vec::new(),
                });
            }
        }
    }
    for sig in &cb.signatures {
        entries.push(TypeEntry {
            name: sig.type_name.clone(),
            description: sig.description.clone(),
            parent: sig.parent.clone(),
            is_abstract: false,
            fields: sig.fields.clone(),
        });
    }
    let file = CodebookFile { version: cb.version.clone(), event_types: entries };
    serde_json::to_string_pretty(&file).expect("codebook serialization cannot fail")
}

/// One argument value of an event instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ArgumentValue {
    Null,
    Bool(bool),
    Int(i64),
    Text(String),
    Category(String),
    CategorySet(Vec<String>),
    EntityRefs(Vec<String>),
    Location { country: String, address: String },
}

impl ArgumentValue {
    pub fn is_null(&self) -> bool {
        matches!(self, ArgumentValue::Null)
    }

    pub fn to_json(&self) -> Value {
        match self {
            ArgumentValue::Null => Value::Null,
            ArgumentValue::Bool(b) => json!(b),
            ArgumentValue::Int(n) => json!(n),
            ArgumentValue::Text(s) => json!(s),
            ArgumentValue::Category(label) => json!(label),
            ArgumentValue::CategorySet(labels) => json!(labels),
            ArgumentValue::EntityRefs(refs) => json!(refs),
            ArgumentValue::Location { country, address } => {
                json!({ "country": country, "address": address })
            }
        }
    }

    /// Interpret a JSON value against a field's domain.
    ///
    /// Integer-like strings are coerced for count fields; everything else
    /// must already have the right JSON shape.
    pub fn from_json(field: &ArgumentField, value: &Value) -> Result<Self, String> {
        if value.is_null() {
            return Ok(ArgumentValue::Null);
        }
        match field.kind {
            DomainKind::Boolean => {
                value.as_bool().map(ArgumentValue::Bool).ok_or_else(|| shape_err(field, value))
            }
            DomainKind::Integer => {
                if let Some(n) = value.as_i64() {
                    Ok(ArgumentValue::Int(n))
                } else if let Some(s) = value.as_str() {
                    s.trim()
                        .parse::<i64>()
                        .map(ArgumentValue::Int)
                        .map_err(|_| format!("role {:?}: cannot coerce {s:?} to a count", field.name))
                } else {
                    Err(shape_err(field, value))
                }
            }
            DomainKind::Text => value
                .as_str()
                .map(|s| ArgumentValue::Text(s.into()))
                .ok_or_else(|| shape_err(field, value)),
            DomainKind::Categorical => value
                .as_str()
                .map(|s| ArgumentValue::Category(s.into()))
                .ok_or_else(|| shape_err(field, value)),
            DomainKind::CategoricalSet => string_array(value)
                .map(ArgumentValue::CategorySet)
                .ok_or_else(|| shape_err(field, value)),
            DomainKind::EntitySet => string_array(value)
                .map(ArgumentValue::EntityRefs)
                .ok_or_else(|| shape_err(field, value)),
            DomainKind::Location => {
                let obj = value.as_object().ok_or_else(|| shape_err(field, value))?;
                let country = obj.get("country").and_then(Value::as_str);
                let address = obj.get("address").and_then(Value::as_str);
                match (country, address) {
                    (Some(c), Some(a)) => {
                        Ok(ArgumentValue::Location { country: c.into(), address: a.into() })
                    }
                    _ => Err(shape_err(field, value)),
                }
            }
        }
    }
}

fn string_array(value: &Value) -> Option<Vec<String>> {
    let arr = value.as_array()?;
    arr.iter().map(|v| v.as_str().map(String::from)).collect()
}

fn shape_err(field: &ArgumentField, value: &Value) -> String {
    format!("role {:?}: value {value} does not fit domain kind {}", field.name, field.kind)
}

/// One extracted or gold event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventInstance {
    pub event_type: String,
    pub arguments: BTreeMap<String, ArgumentValue>,
}

impl EventInstance {
    pub fn new(event_type: impl Into<String>) -> Self {
        EventInstance { event_type: event_type.into(), arguments: BTreeMap::new() }
    }

    pub fn with(mut self, role: impl Into<String>, value: ArgumentValue) -> Self {
        self.arguments.insert(role.into(), value);
        self
    }

    pub fn to_json(&self) -> Value {
        let mut args = serde_json::Map::new();
        for (role, value) in &self.arguments {
            args.insert(role.clone(), value.to_json());
        }
        json!({ "event_type": self.event_type, "arguments": args })
    }

    /// Parse `{"event_type", "arguments"}` JSON against a codebook.
    ///
    /// Array- and string-valued domains are ambiguous in raw JSON, so the
    /// signature is required to type each role.
    pub fn from_json(value: &Value, cb: &Codebook) -> Result<Self, String> {
        let obj = value.as_object().ok_or("event must be a JSON object")?;
        let event_type = obj
            .get("event_type")
            .and_then(Value::as_str)
            .ok_or("missing string field \"event_type\"")?;
        let sig = cb
            .signature(event_type)
            .ok_or_else(|| format!("unknown event type {event_type:?}"))?;
        let args = obj
            .get("arguments")
            .and_then(Value::as_object)
            .ok_or("missing object field \"arguments\"")?;
        let mut arguments = BTreeMap::new();
        for (role, raw) in args {
            let field = sig
                .field(role)
                .ok_or_else(|| format!("unknown role {:?} for event type {:?}", role, event_type))?;
            arguments.insert(role.clone(), ArgumentValue::from_json(field, raw)?);
        }
        Ok(EventInstance { event_type: event_type.into(), arguments })
    }
}

/// A single invariant violation found in an event instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Offending role, when the violation is tied to one.
    pub role: Option<String>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.role {
            Some(role) => write!(f, "{role}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

fn violation(role: Option<&str>, message: impl Into<String>) -> Violation {
    Violation { role: role.map(String::from), message: message.into() }
}

/// Check an event instance against the codebook. Returns every violation
/// found; an empty list means the instance is valid.
pub fn validate_instance(cb: &Codebook, ev: &EventInstance) -> Vec<Violation> {
    let Some(sig) = cb.signature(&ev.event_type) else {
        return vec![violation(None, format!("unknown event type {:?}", ev.event_type))];
    };
    let mut out = Vec::new();
    for role in ev.arguments.keys() {
        if sig.field(role).is_none() {
            out.push(violation(Some(role), "unknown role for this event type"));
        }
    }
    for field in &sig.fields {
        let Some(value) = ev.arguments.get(&field.name) else {
            if !field.nullable {
                out.push(violation(Some(&field.name), "required role is missing"));
            }
            continue;
        };
        check_value(field, value, &mut out);
    }
    out
}

/// Check a single value against one field's domain.
pub fn check_field_value(field: &ArgumentField, value: &ArgumentValue) -> Vec<Violation> {
    let mut out = Vec::new();
    check_value(field, value, &mut out);
    out
}

fn check_value(field: &ArgumentField, value: &ArgumentValue, out: &mut Vec<Violation>) {
    let role = Some(field.name.as_str());
    let mismatch = |out: &mut Vec<Violation>| {
        out.push(violation(role, format!("value does not lie in domain kind {}", field.kind)));
    };
    match value {
        ArgumentValue::Null => {
            if !field.nullable {
                out.push(violation(role, "null value for non-nullable role"));
            }
        }
        ArgumentValue::Bool(_) => {
            if field.kind != DomainKind::Boolean {
                mismatch(out);
            }
        }
        ArgumentValue::Int(n) => {
            if field.kind != DomainKind::Integer {
                mismatch(out);
            } else if *n < 0 {
                out.push(violation(role, "count must be ≥ 0"));
            }
        }
        ArgumentValue::Text(_) => {
            if field.kind != DomainKind::Text {
                mismatch(out);
            }
        }
        ArgumentValue::Category(label) => {
            if field.kind != DomainKind::Categorical {
                mismatch(out);
            } else if !field.options.iter().any(|o| o == label) {
                out.push(violation(role, format!("label {label:?} not among domain options")));
            }
        }
        ArgumentValue::CategorySet(labels) => {
            if field.kind != DomainKind::CategoricalSet {
                mismatch(out);
                return;
            }
            let mut seen = BTreeSet::new();
            for label in labels {
                if !field.options.iter().any(|o| o == label) {
                    out.push(violation(role, format!("label {label:?} not among domain options")));
                }
                if !seen.insert(label) {
                    out.push(violation(role, format!("duplicate label {label:?}")));
                }
            }
        }
        ArgumentValue::EntityRefs(refs) => {
            if field.kind != DomainKind::EntitySet {
                mismatch(out);
                return;
            }
            let mut seen = BTreeSet::new();
            for r in refs {
                if !seen.insert(r) {
                    out.push(violation(role, format!("duplicate entity reference {r:?}")));
                }
            }
        }
        ArgumentValue::Location { country, .. } => {
            if field.kind != DomainKind::Location {
                mismatch(out);
            } else if country.trim().is_empty() {
                out.push(violation(role, "location country must be non-empty"));
            }
        }
    }
}

/// Render the numbered event-type menu embedded in detection prompts.
///
/// One line per concrete type, `[k] "name": description`, in codebook order.
pub fn render_event_type_menu(cb: &Codebook) -> String {
    let mut out = String::new();
    for (i, sig) in cb.signatures.iter().enumerate() {
        out.push_str(&format!("[{}] \"{}\": {}\n", i + 1, sig.type_name, sig.description));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_codebook_json() -> String {
        json!({
            "version": "test-1",
            "event_types": [
                {
                    "name": "Base", "description": "shared fields", "abstract": true,
                    "fields": [
                        {"name": "location", "description": "where", "kind": "location"},
                        {"name": "fatalities", "description": "count", "kind": "integer", "nullable": true}
                    ]
                },
                {
                    "name": "Clash", "description": "a clash", "parent": "Base",
                    "fields": [
                        {"name": "side_1", "description": "first side", "kind": "entity_set", "is_entity_field": true},
                        {"name": "mood", "description": "tone", "kind": "categorical", "options": ["CALM", "TENSE"]}
                    ]
                }
            ]
        })
        .to_string()
    }

    #[test]
    fn flattens_parent_fields_in_order() {
        let loaded = parse_codebook(&tiny_codebook_json()).unwrap();
        let cb = loaded.codebook;
        assert_eq!(cb.signatures.len(), 1);
        let names: Vec<_> = cb.signatures[0].fields.iter().map(|f| f.name.as_str()).collect();
        assert_eq!(names, ["location", "fatalities", "side_1", "mood"]);
        assert_eq!(cb.signatures[0].parent.as_deref(), Some("Base"));
    }

    #[test]
    fn empty_codebook_is_an_error() {
        let err = parse_codebook(r#"{"version":"v","event_types":[]}"#).unwrap_err();
        assert!(matches!(err, CodebookError::Empty));
    }

    #[test]
    fn duplicate_type_name_is_an_error() {
        let raw = json!({
            "version": "v",
            "event_types": [
                {"name": "A", "description": "d", "fields": [{"name": "location", "description": "w", "kind": "location"}]},
                {"name": "A", "description": "d", "fields": [{"name": "location", "description": "w", "kind": "location"}]}
            ]
        })
        .to_string();
        assert!(matches!(parse_codebook(&raw).unwrap_err(), CodebookError::DuplicateTypeName(n) if n == "A"));
    }

    #[test]
    fn abstract_type_without_children_is_an_error() {
        let raw = json!({
            "version": "v",
            "event_types": [
                {"name": "Lonely", "description": "d", "abstract": true, "fields": []},
                {"name": "A", "description": "d", "fields": [{"name": "location", "description": "w", "kind": "location"}]}
            ]
        })
        .to_string();
        assert!(matches!(parse_codebook(&raw).unwrap_err(), CodebookError::AbstractWithoutChildren(n) if n == "Lonely"));
    }

    #[test]
    fn missing_location_field_is_an_error() {
        let raw = json!({
            "version": "v",
            "event_types": [
                {"name": "A", "description": "d", "fields": [{"name": "x", "description": "d", "kind": "boolean"}]}
            ]
        })
        .to_string();
        assert!(matches!(
            parse_codebook(&raw).unwrap_err(),
            CodebookError::LocationFieldCount { found: 0, .. }
        ));
    }

    #[test]
    fn entity_flag_must_match_kind() {
        let raw = json!({
            "version": "v",
            "event_types": [
                {"name": "A", "description": "d", "fields": [
                    {"name": "location", "description": "w", "kind": "location"},
                    {"name": "people", "description": "d", "kind": "entity_set", "is_entity_field": false}
                ]}
            ]
        })
        .to_string();
        assert!(matches!(parse_codebook(&raw).unwrap_err(), CodebookError::BadField { .. }));
    }

    #[test]
    fn validate_flags_unknown_type_and_bad_count() {
        let cb = parse_codebook(&tiny_codebook_json()).unwrap().codebook;

        let stray = EventInstance::new("Sports");
        let violations = validate_instance(&cb, &stray);
        assert_eq!(violations.len(), 1);
        assert!(violations[0].message.contains("unknown event type"));

        let ev = EventInstance::new("Clash")
            .with(
                "location",
                ArgumentValue::Location { country: "Iraq".into(), address: "Iraq".into() },
            )
            .with("fatalities", ArgumentValue::Int(-1))
            .with("side_1", ArgumentValue::EntityRefs(vec!["x".into()]))
            .with("mood", ArgumentValue::Category("CALM".into()));
        let violations = validate_instance(&cb, &ev);
        assert_eq!(violations.len(), 1);
        assert!(violations[0].message.contains("count must be ≥ 0"));
    }

    #[test]
    fn roundtrip_write_then_load() {
        let cb = parse_codebook(&tiny_codebook_json()).unwrap().codebook;
        let reloaded = parse_codebook(&write_codebook(&cb)).unwrap().codebook;
        assert_eq!(cb, reloaded);
    }

    #[test]
    fn menu_numbers_every_concrete_type() {
        let cb = parse_codebook(&tiny_codebook_json()).unwrap().codebook;
        let menu = render_event_type_menu(&cb);
        assert_eq!(menu, "[1] \"Clash\": a clash\n");
    }
}
