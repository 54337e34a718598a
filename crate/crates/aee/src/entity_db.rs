//! Entity database and dense retrieval index.
//!
//! Entities carry one-paragraph descriptions; the index embeds the string
//! `"name: description"` for each entry and serves top-k cosine retrieval.
//! The scan is exact brute force: at the ten-thousand-entity scale of the
//! target databases a full scan is fast and has zero recall error, so no
//! approximate structure is used.

use std::collections::BTreeSet;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Split;
use crate::llm::{l2_normalize, GatewayError, Gateway};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub entity_id: String,
    pub name: String,
    pub description: String,
    /// Generic group label ("Students") vs a specific named actor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generic: Option<bool>,
    /// Split in which the entity first occurs in gold annotations, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_seen_split: Option<Split>,
}

impl Entity {
    /// Text embedded into the index for this entity.
    pub fn embedding_text(&self) -> String {
        format!("{}: {}", self.name, self.description)
    }
}

#[derive(Debug, Error)]
pub enum EntityDbError {
    #[error("failed to read entities file: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {reason}")]
    BadLine { line: usize, reason: String },
    #[error("duplicate entity_id {0:?}")]
    DuplicateId(String),
    #[error("entity list is empty; nothing to index")]
    EmptyDatabase,
    #[error("index was built with embedder {index_tag:?} but the embedder reports {query_tag:?}")]
    EmbedderTagMismatch { index_tag: String, query_tag: String },
    #[error("vector for {entity_id:?} has dimension {got}, index dimension is {expected}")]
    DimensionMismatch { entity_id: String, expected: usize, got: usize },
    #[error("embedding failed: {0}")]
    Embedding(#[from] GatewayError),
    #[error("index parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Load entities from JSONL, one object per line.
pub fn load_entities(path: impl AsRef<Path>) -> Result<Vec<Entity>, EntityDbError> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut entities = Vec::new();
    let mut ids = BTreeSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entity: Entity = serde_json::from_str(&line)
            .map_err(|e| EntityDbError::BadLine { line: idx + 1, reason: e.to_string() })?;
        if entity.name.trim().is_empty() || entity.description.trim().is_empty() {
            return Err(EntityDbError::BadLine {
                line: idx + 1,
                reason: "name and description must be non-empty".into(),
            });
        }
        if !ids.insert(entity.entity_id.clone()) {
            return Err(EntityDbError::DuplicateId(entity.entity_id));
        }
        entities.push(entity);
    }
    Ok(entities)
}

/// Lookup view over an entity list: by id, and by case-insensitive name.
#[derive(Debug, Clone)]
pub struct EntityCatalog {
    entities: Vec<Entity>,
    by_id: std::collections::BTreeMap<String, usize>,
    by_name_ci: std::collections::BTreeMap<String, usize>,
}

impl EntityCatalog {
    pub fn new(entities: Vec<Entity>) -> Self {
        let mut by_id = std::collections::BTreeMap::new();
        let mut by_name_ci = std::collections::BTreeMap::new();
        for (i, e) in entities.iter().enumerate() {
            by_id.insert(e.entity_id.clone(), i);
            by_name_ci.entry(e.name.trim().to_lowercase()).or_insert(i);
        }
        EntityCatalog { entities, by_id, by_name_ci }
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn get(&self, entity_id: &str) -> Option<&Entity> {
        self.by_id.get(entity_id).map(|&i| &self.entities[i])
    }

    /// Resolve an id or a name (case-insensitive) to the entity record.
    pub fn resolve(&self, name_or_id: &str) -> Option<&Entity> {
        if let Some(&i) = self.by_id.get(name_or_id) {
            return Some(&self.entities[i]);
        }
        self.by_name_ci.get(&name_or_id.trim().to_lowercase()).map(|&i| &self.entities[i])
    }
}

/// Immutable dense-vector index over an entity database.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityIndex {
    /// Bumped when the serialized layout changes.
    pub format_version: u32,
    pub embedder_tag: String,
    pub dim: usize,
    /// Unit-norm vectors, sorted by entity_id.
    pub entries: Vec<IndexEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub entity_id: String,
    pub vector: Vec<f32>,
}

pub const INDEX_FORMAT_VERSION: u32 = 1;

impl EntityIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("index serializes")
    }

    pub fn from_json(raw: &str) -> Result<Self, EntityDbError> {
        Ok(serde_json::from_str(raw)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EntityDbError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EntityDbError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

/// Embed every entity and assemble the index. Vectors are L2-normalized and
/// entries sorted by entity_id, so the build is deterministic given the
/// embedder's outputs.
pub fn build_index(entities: &[Entity], gateway: &Gateway) -> Result<EntityIndex, EntityDbError> {
    if entities.is_empty() {
        return Err(EntityDbError::EmptyDatabase);
    }
    let texts: Vec<String> = entities.iter().map(Entity::embedding_text).collect();
    let vectors = gateway.embed(&texts)?;
    let dim = vectors[0].len();
    let mut entries = Vec::with_capacity(entities.len());
    for (entity, mut vector) in entities.iter().zip(vectors) {
        if vector.len() != dim {
            return Err(EntityDbError::DimensionMismatch {
                entity_id: entity.entity_id.clone(),
                expected: dim,
                got: vector.len(),
            });
        }
        l2_normalize(&mut vector);
        entries.push(IndexEntry { entity_id: entity.entity_id.clone(), vector });
    }
    entries.sort_by(|a, b| a.entity_id.cmp(&b.entity_id));
    Ok(EntityIndex {
        format_version: INDEX_FORMAT_VERSION,
        embedder_tag: gateway.embedder_tag()?,
        dim,
        entries,
    })
}

/// One retrieval hit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub entity_id: String,
    pub score: f32,
}

/// Top-k entities by cosine similarity to the query text, descending.
/// Ties break by ascending entity_id; `k` larger than the database returns
/// everything.
pub fn retrieve(
    index: &EntityIndex,
    query: &str,
    k: usize,
    gateway: &Gateway,
) -> Result<Vec<Hit>, EntityDbError> {
    let query_tag = gateway.embedder_tag()?;
    if query_tag != index.embedder_tag {
        return Err(EntityDbError::EmbedderTagMismatch {
            index_tag: index.embedder_tag.clone(),
            query_tag,
        });
    }
    let mut query_vec = gateway.embed(&[query.to_string()])?.remove(0);
    if query_vec.len() != index.dim {
        return Err(EntityDbError::DimensionMismatch {
            entity_id: "<query>".into(),
            expected: index.dim,
            got: query_vec.len(),
        });
    }
    l2_normalize(&mut query_vec);
    let mut hits: Vec<Hit> = index
        .entries
        .iter()
        .map(|entry| Hit {
            entity_id: entry.entity_id.clone(),
            score: dot(&entry.vector, &query_vec),
        })
        .collect();
    hits.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.entity_id.cmp(&b.entity_id))
    });
    hits.truncate(k);
    Ok(hits)
}

pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{GatewayConfig, HashEmbedder, MockChatBackend};
    use std::io::Write;

    fn entity(id: &str, name: &str, description: &str) -> Entity {
        Entity {
            entity_id: id.into(),
            name: name.into(),
            description: description.into(),
            generic: None,
            first_seen_split: None,
        }
    }

    fn gateway(dim: usize) -> Gateway {
        Gateway::new(
            Box::new(MockChatBackend::new(vec![])),
            Some(Box::new(HashEmbedder::new(dim))),
            GatewayConfig::default(),
        )
    }

    fn sample_entities() -> Vec<Entity> {
        vec![
            entity("e-men", "Men", "Adult human males involved in a variety of societal roles."),
            entity("e-police", "Police Forces", "Law enforcement agencies maintaining public order."),
            entity("e-students", "Students", "Individuals enrolled in educational institutions."),
            entity("e-women", "Women", "Adult human females active across social and political life."),
        ]
    }

    #[test]
    fn load_rejects_duplicate_ids() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, r#"{{"entity_id":"a","name":"A","description":"d"}}"#).unwrap();
        writeln!(file, r#"{{"entity_id":"a","name":"B","description":"d"}}"#).unwrap();
        assert!(matches!(
            load_entities(file.path()).unwrap_err(),
            EntityDbError::DuplicateId(id) if id == "a"
        ));
    }

    #[test]
    fn empty_file_gives_empty_db_and_index_build_fails() {
        let file = tempfile::NamedTempFile::new().unwrap();
        let entities = load_entities(file.path()).unwrap();
        assert!(entities.is_empty());
        assert!(matches!(
            build_index(&entities, &gateway(16)).unwrap_err(),
            EntityDbError::EmptyDatabase
        ));
    }

    #[test]
    fn build_produces_unit_norm_sorted_entries() {
        let gw = gateway(32);
        let index = build_index(&sample_entities(), &gw).unwrap();
        assert_eq!(index.len(), 4);
        let ids: Vec<_> = index.entries.iter().map(|e| e.entity_id.as_str()).collect();
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        assert_eq!(ids, sorted);
        for entry in &index.entries {
            let norm: f32 = entry.vector.iter().map(|v| v * v).sum::<f32>().sqrt();
            assert!((norm - 1.0).abs() < 1e-5, "entry {} norm {norm}", entry.entity_id);
        }
    }

    #[test]
    fn self_retrieval_ranks_first_and_k_is_clamped() {
        let gw = gateway(64);
        let entities = sample_entities();
        let index = build_index(&entities, &gw).unwrap();
        for e in &entities {
            let hits = retrieve(&index, &e.embedding_text(), 1, &gw).unwrap();
            assert_eq!(hits[0].entity_id, e.entity_id);
            assert!(hits[0].score > 0.999);
        }
        let all = retrieve(&index, "anything", 1_000_000, &gw).unwrap();
        assert_eq!(all.len(), 4);
        for hit in &all {
            assert!((-1.0..=1.0).contains(&hit.score));
        }
    }

    #[test]
    fn identical_vectors_tie_break_by_entity_id() {
        // Two entities with identical text embed to identical vectors.
        let gw = gateway(32);
        let entities = vec![
            entity("z-later", "Same Name", "identical description"),
            entity("a-early", "Same Name", "identical description"),
        ];
        let index = build_index(&entities, &gw).unwrap();
        let hits = retrieve(&index, "Same Name: identical description", 2, &gw).unwrap();
        assert_eq!(hits[0].entity_id, "a-early");
        assert_eq!(hits[1].entity_id, "z-later");
        assert!((hits[0].score - hits[1].score).abs() < 1e-7);
    }

    #[test]
    fn tag_mismatch_is_refused() {
        let gw = gateway(32);
        let index = build_index(&sample_entities(), &gw).unwrap();
        let other = gateway(16);
        assert!(matches!(
            retrieve(&index, "q", 3, &other).unwrap_err(),
            EntityDbError::EmbedderTagMismatch { .. }
        ));
    }

    #[test]
    fn index_roundtrips_through_json() {
        let gw = gateway(16);
        let index = build_index(&sample_entities(), &gw).unwrap();
        let reloaded = EntityIndex::from_json(&index.to_json()).unwrap();
        assert_eq!(index, reloaded);
    }
}
