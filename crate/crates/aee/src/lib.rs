//! Abstractive event extraction toolkit.
//!
//! Implements the full pipeline for codebook-driven event extraction over
//! news documents: event detection, abstractive (non-span) argument
//! extraction, retrieval-based zero-shot entity linking, location
//! normalization against OpenStreetMap, and an exact-match micro-F1
//! evaluation suite.
//!
//! Every stage that talks to a model goes through [`llm::Gateway`], which
//! caches responses on disk and can be backed by a scripted mock, so whole
//! pipelines replay deterministically and offline. See the crate's
//! `examples/` directory for one runnable example per capability.

pub mod cli;
pub mod codebook;
pub mod corpus;
pub mod entity_db;
pub mod eval;
pub mod extract;
pub mod geonorm;
pub mod llm;
pub mod prompts;
pub mod schema;
pub mod zest;

pub use codebook::{load_codebook, validate_instance, Codebook, EventInstance};
pub use corpus::{corpus_stats, hill_number, load_corpus, Document, GoldRecord};
pub use entity_db::{build_index, load_entities, retrieve, Entity, EntityCatalog, EntityIndex};
pub use eval::{canonical_pairs, score_aeae, score_ael, score_e2e, score_ed, ScoreReport};
pub use extract::{detect_event, extract_arguments, run_e2e, Prediction};
pub use geonorm::{locations_match, Geocoder, NormalizedLocation};
pub use llm::{ChatRequest, Gateway};
pub use zest::{run_zest, RoleAssignment};
