//! Three-stage zero-shot abstractive entity linker.
//!
//! Stage 1 asks the model to hypothesize which entities are involved in the
//! article and to write a short description for each; every (name,
//! description) pair becomes a retrieval query against the entity index and
//! the union of the hits forms the candidate set. Stage 2 asks the model for
//! a supporting evidence span per candidate; candidates without evidence are
//! dropped. Stage 3 assigns the surviving entities to the event's entity
//! argument roles.
//!
//! Only names flow through prompts; entity ids are resolved back from the
//! model's output by exact case-insensitive name match, and hallucinated
//! names are dropped with a warning. An entity can fill at most one role:
//! the first role in signature order wins.

use std::collections::BTreeMap;

use serde_json::{json, Value};
use thiserror::Error;

use crate::codebook::{Codebook, EventInstance};
use crate::corpus::Document;
use crate::entity_db::{retrieve, EntityCatalog, EntityDbError, EntityIndex, Hit};
use crate::llm::{extract_json, ChatRequest, Gateway, GatewayError};
use crate::prompts::{PromptError, PromptSet};

#[derive(Debug, Clone)]
pub struct ZestConfig {
    pub model: String,
    /// Cap on stage-1 queries.
    pub q_max: usize,
    /// Hits retrieved per query.
    pub k_per_query: usize,
    /// Cap on the candidate union, keeping best-scoring entities.
    pub c_max: usize,
}

impl Default for ZestConfig {
    fn default() -> Self {
        ZestConfig { model: "gpt-4o".into(), q_max: 20, k_per_query: 16, c_max: 64 }
    }
}

/// One stage-1 retrieval query: a hypothesized entity and its description.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct EntityQuery {
    pub name: String,
    pub description: String,
}

impl EntityQuery {
    pub fn query_text(&self) -> String {
        format!("{}: {}", self.name, self.description)
    }
}

/// Union of entities retrieved by the stage-1 queries.
#[derive(Debug, Clone, Default, serde::Serialize)]
pub struct CandidateSet {
    pub queries: Vec<EntityQuery>,
    /// Deduplicated hits with each entity's best score, best first.
    pub retrieved: Vec<Hit>,
    /// Which queries contributed each entity.
    pub provenance: BTreeMap<String, Vec<String>>,
}

/// Stage-2 verdict for one candidate.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct EvidenceJudgment {
    pub entity_id: String,
    pub supported: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence_span: Option<String>,
    pub explanation: String,
}

/// Stage-3 output: entity ids per entity argument role.
#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct RoleAssignment {
    pub roles: BTreeMap<String, Vec<String>>,
}

/// Persisted per-document trace of all three stages.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ZestTrace {
    pub doc_id: String,
    pub stage1: CandidateSet,
    pub stage2: Vec<EvidenceJudgment>,
    pub stage3: RoleAssignment,
}

#[derive(Debug)]
pub struct ZestOutcome {
    pub assignment: RoleAssignment,
    pub trace: ZestTrace,
    pub warnings: Vec<String>,
}

#[derive(Debug, Error)]
pub enum ZestError {
    #[error("query generation stage: {0}")]
    QueryStage(String),
    #[error("retrieval stage: {0}")]
    RetrievalStage(#[from] EntityDbError),
    #[error("evidence filtering stage: {0}")]
    FilterStage(String),
    #[error("role assignment stage: {0}")]
    AssignStage(String),
    #[error("unknown event type {0:?}")]
    UnknownEventType(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

/// Stage 1a: hypothesize involved entities with descriptions.
pub fn generate_queries(
    doc: &Document,
    gateway: &Gateway,
    prompts: &PromptSet,
    cfg: &ZestConfig,
) -> Result<(Vec<EntityQuery>, Vec<String>), ZestError> {
    let (system, user) = prompts.link_queries.render(&[("article", doc.text.as_str())])?;
    let response = gateway.chat(&ChatRequest::new(&cfg.model, system, user))?;
    let block = between_tags(&response.text, "entity_list").unwrap_or(&response.text);
    let parsed = extract_json(block).map_err(ZestError::QueryStage)?;
    let obj = parsed
        .as_object()
        .ok_or_else(|| ZestError::QueryStage("entity list is not a JSON object".into()))?;
    let mut queries = Vec::new();
    let mut warnings = Vec::new();
    for (name, description) in obj {
        let description = description.as_str().unwrap_or_default().to_string();
        if name.trim().is_empty() {
            warnings.push("dropped entity query with empty name".into());
            continue;
        }
        queries.push(EntityQuery { name: name.clone(), description });
    }
    if queries.len() > cfg.q_max {
        warnings.push(format!(
            "model proposed {} entity queries; truncated to the cap of {}",
            queries.len(),
            cfg.q_max
        ));
        queries.truncate(cfg.q_max);
    }
    Ok((queries, warnings))
}

fn between_tags<'a>(text: &'a str, tag: &str) -> Option<&'a str> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let start = text.find(&open)? + open.len();
    let end = text[start..].find(&close)? + start;
    Some(&text[start..end])
}

/// Stage 1b: retrieve per query and take the deduplicated union.
pub fn gather_candidates(
    queries: &[EntityQuery],
    index: &EntityIndex,
    gateway: &Gateway,
    cfg: &ZestConfig,
) -> Result<CandidateSet, ZestError> {
    let mut best: BTreeMap<String, f32> = BTreeMap::new();
    let mut provenance: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for query in queries {
        let hits = retrieve(index, &query.query_text(), cfg.k_per_query, gateway)?;
        for hit in hits {
            let entry = best.entry(hit.entity_id.clone()).or_insert(f32::NEG_INFINITY);
            if hit.score > *entry {
                *entry = hit.score;
            }
            let contributors = provenance.entry(hit.entity_id).or_default();
            if !contributors.contains(&query.name) {
                contributors.push(query.name.clone());
            }
        }
    }
    let mut retrieved: Vec<Hit> =
        best.into_iter().map(|(entity_id, score)| Hit { entity_id, score }).collect();
    retrieved.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.entity_id.cmp(&b.entity_id))
    });
    if retrieved.len() > cfg.c_max {
        retrieved.truncate(cfg.c_max);
    }
    provenance.retain(|id, _| retrieved.iter().any(|h| &h.entity_id == id));
    Ok(CandidateSet { queries: queries.to_vec(), retrieved, provenance })
}

fn filter_output_schema() -> String {
    json!({
        "title": "evidence_judgments",
        "type": "object",
        "properties": {
            "judgments": {
                "type": "array",
                "items": {
                    "type": "object",
                    "properties": {
                        "entity_name": {"type": "string"},
                        "evidence": {"type": "string"},
                        "explanation": {"type": "string"}
                    },
                    "required": ["entity_name", "evidence", "explanation"],
                    "additionalProperties": false
                }
            }
        },
        "required": ["judgments"],
        "additionalProperties": false
    })
    .to_string()
}

/// Stage 2: one evidence judgment per candidate. Candidates the model does
/// not mention come back unsupported.
pub fn filter_candidates(
    doc: &Document,
    candidates: &CandidateSet,
    catalog: &EntityCatalog,
    gateway: &Gateway,
    prompts: &PromptSet,
    cfg: &ZestConfig,
) -> Result<Vec<EvidenceJudgment>, ZestError> {
    if candidates.retrieved.is_empty() {
        return Ok(Vec::new());
    }
    let mut block = String::new();
    for hit in &candidates.retrieved {
        let Some(entity) = catalog.get(&hit.entity_id) else {
            return Err(ZestError::FilterStage(format!(
                "candidate {:?} is missing from the entity database",
                hit.entity_id
            )));
        };
        block.push_str(&format!("  - {}\n  {}\n\n", entity.name, entity.description));
    }
    let (system, user) = prompts.link_filter.render(&[
        ("country", doc.country.as_str()),
        ("article", doc.text.as_str()),
        ("entities", block.trim_end()),
    ])?;
    let request =
        ChatRequest::new(&cfg.model, system, user).with_schema(filter_output_schema());
    let response = gateway.chat(&request)?;
    let parsed = response.parsed.expect("schema-constrained reply is parsed");
    let replies = parsed["judgments"].as_array().cloned().unwrap_or_default();

    let mut by_name: BTreeMap<String, (String, String)> = BTreeMap::new();
    for item in &replies {
        let name = item["entity_name"].as_str().unwrap_or_default().trim().to_lowercase();
        let evidence = item["evidence"].as_str().unwrap_or_default().to_string();
        let explanation = item["explanation"].as_str().unwrap_or_default().to_string();
        by_name.entry(name).or_insert((evidence, explanation));
    }

    let mut judgments = Vec::new();
    for hit in &candidates.retrieved {
        let entity = catalog.get(&hit.entity_id).expect("checked above");
        let looked_up = by_name.get(&entity.name.trim().to_lowercase());
        let (evidence, explanation) = match looked_up {
            Some((e, x)) => (e.clone(), x.clone()),
            None => (String::new(), "no judgment returned by the model".to_string()),
        };
        let supported = !evidence.trim().is_empty();
        judgments.push(EvidenceJudgment {
            entity_id: hit.entity_id.clone(),
            supported,
            evidence_span: supported.then_some(evidence),
            explanation,
        });
    }
    Ok(judgments)
}

fn assign_output_schema(roles: &[&str]) -> String {
    let mut properties = serde_json::Map::new();
    for role in roles {
        properties.insert(
            role.to_string(),
            json!({ "type": "array", "items": {"type": "string"}, "uniqueItems": true }),
        );
    }
    json!({
        "title": "role_assignment",
        "type": "object",
        "properties": properties,
        "required": roles,
        "additionalProperties": false
    })
    .to_string()
}

/// Stage 3: map filtered entities onto the signature's entity roles.
///
/// `base_event` supplies the non-entity arguments shown to the model (with
/// entity roles emptied); pass `None` when only the event type is known.
pub fn assign_roles(
    doc: &Document,
    event_type: &str,
    filtered_ids: &[String],
    cb: &Codebook,
    base_event: Option<&EventInstance>,
    catalog: &EntityCatalog,
    gateway: &Gateway,
    prompts: &PromptSet,
    cfg: &ZestConfig,
) -> Result<(RoleAssignment, Vec<String>), ZestError> {
    let sig = cb
        .signature(event_type)
        .ok_or_else(|| ZestError::UnknownEventType(event_type.to_string()))?;
    let roles: Vec<&str> = sig.entity_fields().map(|f| f.name.as_str()).collect();
    let mut assignment = RoleAssignment::default();
    for role in &roles {
        assignment.roles.insert(role.to_string(), Vec::new());
    }
    if roles.is_empty() || filtered_ids.is_empty() {
        return Ok((assignment, Vec::new()));
    }

    let mut fields_block = String::new();
    for field in sig.entity_fields() {
        fields_block.push_str(&format!("- {}: {}\n", field.name, field.description));
    }
    let mut entities_block = String::new();
    for id in filtered_ids {
        let Some(entity) = catalog.get(id) else {
            return Err(ZestError::AssignStage(format!(
                "filtered entity {id:?} is missing from the entity database"
            )));
        };
        entities_block.push_str(&format!("    - {}: {}\n\n", entity.name, entity.description));
    }

    let skeleton = event_with_empty_entities(sig.type_name.as_str(), base_event, &roles);
    let (system, user) = prompts.link_assign.render(&[
        ("event_type", event_type),
        ("event_type_definition", sig.description.as_str()),
        ("possible_fields", fields_block.trim_end()),
        ("article", doc.text.as_str()),
        ("event_with_empty_entities", &skeleton),
        ("entities", entities_block.trim_end()),
    ])?;
    let request =
        ChatRequest::new(&cfg.model, system, user).with_schema(assign_output_schema(&roles));
    let response = gateway.chat(&request)?;
    let parsed = response.parsed.expect("schema-constrained reply is parsed");

    let mut warnings = Vec::new();
    let mut already_assigned: BTreeMap<String, String> = BTreeMap::new();
    // Walk roles in signature order so the one-role-per-entity rule is
    // deterministic.
    for role in &roles {
        let names = parsed[*role].as_array().cloned().unwrap_or_default();
        for name in names.iter().filter_map(Value::as_str) {
            let resolved = catalog
                .resolve(name)
                .filter(|e| filtered_ids.contains(&e.entity_id));
            let Some(entity) = resolved else {
                warnings.push(format!(
                    "role {role:?}: model named {name:?}, which is not among the filtered candidates; dropped"
                ));
                continue;
            };
            if let Some(prev) = already_assigned.get(&entity.entity_id) {
                warnings.push(format!(
                    "entity {:?} assigned to both {prev:?} and {role:?}; keeping {prev:?}",
                    entity.name
                ));
                continue;
            }
            already_assigned.insert(entity.entity_id.clone(), role.to_string());
            assignment.roles.get_mut(*role).expect("role pre-seeded").push(entity.entity_id.clone());
        }
    }
    Ok((assignment, warnings))
}

fn event_with_empty_entities(
    event_type: &str,
    base_event: Option<&EventInstance>,
    entity_roles: &[&str],
) -> String {
    let mut args = serde_json::Map::new();
    if let Some(ev) = base_event {
        for (role, value) in &ev.arguments {
            if !entity_roles.contains(&role.as_str()) {
                args.insert(role.clone(), value.to_json());
            }
        }
    }
    for role in entity_roles {
        args.insert(role.to_string(), json!([]));
    }
    serde_json::to_string_pretty(&json!({ "event_type": event_type, "arguments": args }))
        .expect("skeleton serializes")
}

/// Run all three stages for one document and event type.
pub fn run_zest(
    doc: &Document,
    event_type: &str,
    cb: &Codebook,
    index: &EntityIndex,
    catalog: &EntityCatalog,
    gateway: &Gateway,
    prompts: &PromptSet,
    cfg: &ZestConfig,
    base_event: Option<&EventInstance>,
) -> Result<ZestOutcome, ZestError> {
    let sig = cb
        .signature(event_type)
        .ok_or_else(|| ZestError::UnknownEventType(event_type.to_string()))?;
    let mut trace = ZestTrace {
        doc_id: doc.doc_id.clone(),
        stage1: CandidateSet::default(),
        stage2: Vec::new(),
        stage3: RoleAssignment::default(),
    };

    // Types without entity arguments need no linking and no model calls.
    if sig.entity_fields().next().is_none() {
        return Ok(ZestOutcome {
            assignment: RoleAssignment::default(),
            trace,
            warnings: Vec::new(),
        });
    }

    let (queries, mut warnings) = generate_queries(doc, gateway, prompts, cfg)?;
    let candidates = gather_candidates(&queries, index, gateway, cfg)?;
    trace.stage1 = candidates.clone();

    let (assignment, judgment_list) = if candidates.retrieved.is_empty() {
        // Nothing retrieved: stages 2 and 3 are skipped entirely.
        let mut empty = RoleAssignment::default();
        for field in sig.entity_fields() {
            empty.roles.insert(field.name.clone(), Vec::new());
        }
        (empty, Vec::new())
    } else {
        let judgments = filter_candidates(doc, &candidates, catalog, gateway, prompts, cfg)?;
        let filtered: Vec<String> = judgments
            .iter()
            .filter(|j| j.supported)
            .map(|j| j.entity_id.clone())
            .collect();
        let (assignment, mut assign_warnings) = assign_roles(
            doc, event_type, &filtered, cb, base_event, catalog, gateway, prompts, cfg,
        )?;
        warnings.append(&mut assign_warnings);
        (assignment, judgments)
    };
    trace.stage2 = judgment_list;
    trace.stage3 = assignment.clone();
    Ok(ZestOutcome { assignment, trace, warnings })
}
