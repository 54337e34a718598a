//! Zero-shot event detection and argument extraction drivers, plus the
//! end-to-end pipeline (detect, then extract arguments and link entities
//! under the predicted type).

use std::collections::BTreeMap;

use serde_json::{json, Value};
use thiserror::Error;

use crate::codebook::{
    check_field_value, validate_instance, ArgumentValue, Codebook, EventInstance,
};
use crate::corpus::Document;
use crate::entity_db::{EntityCatalog, EntityIndex};
use crate::llm::{ChatRequest, Gateway, GatewayError};
use crate::prompts::{PromptError, PromptSet};
use crate::schema::{signature_schema_value, FieldFilter};
use crate::zest::{run_zest, ZestConfig, ZestError, ZestTrace};

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("unknown event type {0:?}")]
    UnknownEventType(String),
    #[error("no parseable event-type ranking after {attempts} attempts: {reason}")]
    UnparseableRanking { attempts: usize, reason: String },
    #[error("argument extraction failed after {attempts} attempts: {reason}")]
    BadArguments { attempts: usize, reason: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Linking(#[from] ZestError),
}

/// Ranked event-type prediction for one document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectionResult {
    /// Best match first; never empty.
    pub ranked_types: Vec<String>,
    /// The model's reasoning text preceding the ranking line.
    pub rationale: String,
}

impl DetectionResult {
    pub fn top(&self) -> &str {
        &self.ranked_types[0]
    }
}

const PARSE_RETRIES: usize = 2;

/// Event detection: embed the codebook menu in the detection prompt and
/// parse the final `a > b > ...` ranking line.
pub fn detect_event(
    doc: &Document,
    cb: &Codebook,
    gateway: &Gateway,
    prompts: &PromptSet,
    model: &str,
) -> Result<(DetectionResult, Vec<String>), ExtractError> {
    let menu = crate::codebook::render_event_type_menu(cb);
    let (system, user) = prompts
        .detect
        .render(&[("article", doc.text.as_str()), ("event_type_menu", menu.as_str())])?;
    let mut request = ChatRequest::new(model, system, user);
    let mut last_reason = String::new();
    for attempt in 0..=PARSE_RETRIES {
        let response = gateway.chat(&request)?;
        match parse_ranking(&response.text, cb) {
            Ok((result, warnings)) => return Ok((result, warnings)),
            Err(reason) => {
                last_reason = reason;
                if attempt < PARSE_RETRIES {
                    let mut user = request.user.clone();
                    user.push_str(
                        "\n\nYour previous reply did not end with a parseable ranking line. \
                         Finish with one line of event type names separated by \" > \".",
                    );
                    request = ChatRequest { user, ..request };
                }
            }
        }
    }
    Err(ExtractError::UnparseableRanking { attempts: PARSE_RETRIES + 1, reason: last_reason })
}

/// Find the last line that yields at least one known type name; names not in
/// the codebook are dropped with a warning.
fn parse_ranking(text: &str, cb: &Codebook) -> Result<(DetectionResult, Vec<String>), String> {
    let mut lines: Vec<(usize, &str)> = Vec::new();
    let mut pos = 0;
    for line in text.split('\n') {
        lines.push((pos, line));
        pos += line.len() + 1;
    }
    for (start, line) in lines.into_iter().rev() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut ranked = Vec::new();
        let mut warnings = Vec::new();
        for token in line.split('>') {
            let name = token.trim().trim_end_matches('.').trim_matches(['"', '`', '*']);
            if name.is_empty() {
                continue;
            }
            if cb.signature(name).is_some() {
                if !ranked.contains(&name.to_string()) {
                    ranked.push(name.to_string());
                }
            } else {
                warnings.push(format!("dropped unknown event type {name:?} from the ranking"));
            }
        }
        if !ranked.is_empty() {
            let rationale = text[..start].trim().to_string();
            return Ok((DetectionResult { ranked_types: ranked, rationale }, warnings));
        }
    }
    Err("no line contains a known event type".into())
}

/// Schema used for the argument-extraction call: the signature's non-entity
/// fields, with count fields widened to also accept integer-like strings
/// (coerced after parsing).
fn eae_schema(cb: &Codebook, t: &str) -> Result<String, ExtractError> {
    let sig = cb.signature(t).ok_or_else(|| ExtractError::UnknownEventType(t.to_string()))?;
    let mut schema = signature_schema_value(sig, FieldFilter::NonEntity);
    if let Some(props) = schema["properties"].as_object_mut() {
        for field in sig.non_entity_fields() {
            if field.kind == crate::codebook::DomainKind::Integer {
                let widened = if field.nullable {
                    json!(["integer", "string", "null"])
                } else {
                    json!(["integer", "string"])
                };
                props[&field.name]["type"] = widened;
            }
        }
    }
    Ok(serde_json::to_string_pretty(&schema).expect("schema serializes"))
}

/// Abstractive argument extraction for the non-entity roles of type `t`.
/// Unknowable values come back as null; integer-like strings are coerced to
/// counts, and non-coercible values trigger a bounded repair loop.
pub fn extract_arguments(
    doc: &Document,
    t: &str,
    cb: &Codebook,
    gateway: &Gateway,
    prompts: &PromptSet,
    model: &str,
) -> Result<BTreeMap<String, ArgumentValue>, ExtractError> {
    let sig = cb.signature(t).ok_or_else(|| ExtractError::UnknownEventType(t.to_string()))?;
    let (system, user) = prompts.extract_args.render(&[
        ("event_type", t),
        ("event_type_definition", sig.description.as_str()),
        ("article", doc.text.as_str()),
    ])?;
    let mut request = ChatRequest::new(model, system, user).with_schema(eae_schema(cb, t)?);

    let mut last_reason = String::new();
    for attempt in 0..=PARSE_RETRIES {
        let response = gateway.chat(&request)?;
        let parsed = response.parsed.expect("schema-constrained reply is parsed");
        match arguments_from_reply(sig, &parsed) {
            Ok(args) => return Ok(args),
            Err(reason) => {
                last_reason = reason;
                if attempt < PARSE_RETRIES {
                    let mut user = request.user.clone();
                    user.push_str(&format!(
                        "\n\nYour previous reply contained invalid argument values: {last_reason}. \
                         Reply again with corrected values."
                    ));
                    request = ChatRequest { user, ..request };
                }
            }
        }
    }
    Err(ExtractError::BadArguments { attempts: PARSE_RETRIES + 1, reason: last_reason })
}

fn arguments_from_reply(
    sig: &crate::codebook::EventSignature,
    parsed: &Value,
) -> Result<BTreeMap<String, ArgumentValue>, String> {
    let mut args = BTreeMap::new();
    for field in sig.non_entity_fields() {
        let raw = parsed.get(&field.name).cloned().unwrap_or(Value::Null);
        let value = ArgumentValue::from_json(field, &raw)?;
        let violations = check_field_value(field, &value);
        if !violations.is_empty() {
            let msgs: Vec<String> = violations.iter().map(ToString::to_string).collect();
            return Err(msgs.join("; "));
        }
        args.insert(field.name.clone(), value);
    }
    Ok(args)
}

/// One end-to-end prediction. Failures are recorded per document; a batch
/// never aborts because one article failed.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub doc_id: String,
    pub event: Option<EventInstance>,
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
    pub trace: Option<ZestTrace>,
}

impl Prediction {
    pub fn to_json(&self) -> Value {
        json!({
            "doc_id": self.doc_id,
            "predicted": self.event.as_ref().map(EventInstance::to_json),
            "errors": self.errors,
            "trace_ref": self.trace.as_ref().map(|t| t.doc_id.clone()),
        })
    }
}

#[derive(Debug, Clone)]
pub struct E2eOptions {
    pub model: String,
    /// Bypass detection and use this type (gold-type mode).
    pub gold_type: Option<String>,
    pub zest: ZestConfig,
}

impl Default for E2eOptions {
    fn default() -> Self {
        E2eOptions { model: "gpt-4o".into(), gold_type: None, zest: ZestConfig::default() }
    }
}

/// Full pipeline for one document: detect the type (unless given), then
/// extract non-entity arguments and link entities under it, and merge.
pub fn run_e2e(
    doc: &Document,
    cb: &Codebook,
    index: &EntityIndex,
    catalog: &EntityCatalog,
    gateway: &Gateway,
    prompts: &PromptSet,
    opts: &E2eOptions,
) -> Prediction {
    let mut prediction = Prediction {
        doc_id: doc.doc_id.clone(),
        event: None,
        errors: Vec::new(),
        warnings: Vec::new(),
        trace: None,
    };

    let event_type = match &opts.gold_type {
        Some(t) => t.clone(),
        None => match detect_event(doc, cb, gateway, prompts, &opts.model) {
            Ok((result, warnings)) => {
                prediction.warnings.extend(warnings);
                result.top().to_string()
            }
            Err(e) => {
                prediction.errors.push(format!("detection: {e}"));
                return prediction;
            }
        },
    };

    let args = match extract_arguments(doc, &event_type, cb, gateway, prompts, &opts.model) {
        Ok(args) => args,
        Err(e) => {
            prediction.errors.push(format!("argument extraction: {e}"));
            return prediction;
        }
    };

    let mut event = EventInstance::new(event_type.clone());
    event.arguments = args;

    match run_zest(doc, &event_type, cb, index, catalog, gateway, prompts, &opts.zest, Some(&event))
    {
        Ok(outcome) => {
            prediction.warnings.extend(outcome.warnings);
            for (role, ids) in outcome.assignment.roles {
                event.arguments.insert(role, ArgumentValue::EntityRefs(ids));
            }
            prediction.trace = Some(outcome.trace);
        }
        Err(e) => {
            prediction.errors.push(format!("entity linking: {e}"));
            return prediction;
        }
    }

    let violations = validate_instance(cb, &event);
    if violations.is_empty() {
        prediction.event = Some(event);
    } else {
        let msgs: Vec<String> = violations.iter().map(ToString::to_string).collect();
        prediction.errors.push(format!("merged event failed validation: {}", msgs.join("; ")));
    }
    prediction
}
