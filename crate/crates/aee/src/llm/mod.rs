//! Uniform client for chat-completion and embedding services.
//!
//! The gateway wraps any [`ChatBackend`]/[`EmbedBackend`] pair with:
//! content-addressed response caching, bounded transport retries, a bounded
//! in-flight request limit, and structured-output enforcement with a small
//! repair loop (the reply is validated against the request's schema and the
//! model is re-prompted with the validator errors a limited number of times).
//!
//! Two backends ship with the crate besides the HTTP ones: a scripted mock
//! that replays canned transcripts, and a seeded hash embedder. Together
//! they make every pipeline in this crate fully deterministic in tests.

mod cache;
mod embed;
mod http;
mod mock;

pub use cache::DiskCache;
pub use embed::{l2_normalize, HashEmbedder};
pub use http::{HttpChatBackend, HttpEmbedBackend};
pub use mock::{MockChatBackend, TranscriptEntry};

use std::sync::{Condvar, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::schema::check_value;

/// Environment variables the CLI reads to configure live backends.
pub const ENV_LLM_API_KEY: &str = "LLM_API_KEY";
pub const ENV_LLM_BASE_URL: &str = "LLM_BASE_URL";
pub const ENV_EMBED_API_KEY: &str = "EMBED_API_KEY";
pub const ENV_EMBED_BASE_URL: &str = "EMBED_BASE_URL";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub system: String,
    pub user: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_schema: Option<String>,
    pub temperature: f64,
}

impl ChatRequest {
    pub fn new(model: impl Into<String>, system: impl Into<String>, user: impl Into<String>) -> Self {
        ChatRequest {
            model: model.into(),
            system: system.into(),
            user: user.into(),
            output_schema: None,
            temperature: 0.0,
        }
    }

    pub fn with_schema(mut self, schema: impl Into<String>) -> Self {
        self.output_schema = Some(schema.into());
        self
    }

    /// Content address of this request. Identical requests share a cache slot.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for part in [
            self.model.as_str(),
            self.system.as_str(),
            self.user.as_str(),
            self.output_schema.as_deref().unwrap_or(""),
        ] {
            hasher.update((part.len() as u64).to_le_bytes());
            hasher.update(part.as_bytes());
        }
        hasher.update(self.temperature.to_le_bytes());
        hex::encode(hasher.finalize())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    /// Raw completion text.
    pub text: String,
    /// Schema-validated structured value, present iff the request carried a
    /// schema.
    pub parsed: Option<Value>,
    pub usage: TokenUsage,
}

/// Raw reply from a backend, before schema enforcement.
#[derive(Debug, Clone)]
pub struct BackendReply {
    pub text: String,
    pub usage: TokenUsage,
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<BackendReply, GatewayError>;
}

pub trait EmbedBackend: Send + Sync {
    /// Stable identifier of the embedding model and dimension; indexes refuse
    /// queries from a differently-tagged embedder.
    fn tag(&self) -> String;
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, GatewayError>;
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { attempts: usize, message: String },
    #[error("authentication failure: {0}")]
    Auth(String),
    #[error("reply violates the output schema after {attempts} repair attempts: {errors:?}")]
    SchemaViolation { attempts: usize, errors: Vec<String> },
    #[error("no transcript entry matches request {fingerprint} (user prompt starts {preview:?})")]
    UnmatchedRequest { fingerprint: String, preview: String },
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("embedding batch is empty")]
    EmptyBatch,
    #[error("no embedding backend configured")]
    NoEmbedBackend,
    #[error("malformed backend reply: {0}")]
    BadReply(String),
    #[error("cache error: {0}")]
    Cache(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub cache_dir: Option<std::path::PathBuf>,
    /// Skip cache reads (writes still happen so later runs can replay).
    pub no_cache: bool,
    pub max_in_flight: usize,
    pub transport_retries: usize,
    pub repair_attempts: usize,
    pub backoff_ms: u64,
    pub embed_batch_size: usize,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            cache_dir: None,
            no_cache: false,
            max_in_flight: 8,
            transport_retries: 3,
            repair_attempts: 2,
            backoff_ms: 250,
            embed_batch_size: 128,
        }
    }
}

/// Counting semaphore bounding concurrent backend calls.
struct InFlight {
    permits: Mutex<usize>,
    freed: Condvar,
}

impl InFlight {
    fn new(max: usize) -> Self {
        InFlight { permits: Mutex::new(max.max(1)), freed: Condvar::new() }
    }

    fn acquire(&self) -> InFlightGuard<'_> {
        let mut permits = self.permits.lock().unwrap();
        while *permits == 0 {
            permits = self.freed.wait(permits).unwrap();
        }
        *permits -= 1;
        InFlightGuard { owner: self }
    }
}

struct InFlightGuard<'a> {
    owner: &'a InFlight,
}

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        *self.owner.permits.lock().unwrap() += 1;
        self.owner.freed.notify_one();
    }
}

pub struct Gateway {
    chat_backend: Box<dyn ChatBackend>,
    embed_backend: Option<Box<dyn EmbedBackend>>,
    cache: Option<DiskCache>,
    config: GatewayConfig,
    in_flight: InFlight,
}

impl Gateway {
    pub fn new(
        chat_backend: Box<dyn ChatBackend>,
        embed_backend: Option<Box<dyn EmbedBackend>>,
        config: GatewayConfig,
    ) -> Self {
        let cache = config.cache_dir.as_ref().map(|dir| DiskCache::new(dir.clone()));
        let in_flight = InFlight::new(config.max_in_flight);
        Gateway { chat_backend, embed_backend, cache, config, in_flight }
    }

    pub fn embedder_tag(&self) -> Result<String, GatewayError> {
        Ok(self.embed_backend.as_ref().ok_or(GatewayError::NoEmbedBackend)?.tag())
    }

    /// Chat completion with caching, transport retries, and schema repair.
    ///
    /// The response is cached under the fingerprint of the *original*
    /// request, so replays are byte-identical even when repair prompts were
    /// needed to obtain a schema-valid reply.
    pub fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let fingerprint = req.fingerprint();
        if !self.config.no_cache {
            if let Some(cache) = &self.cache {
                if let Some(hit) = cache.get_chat(&fingerprint)? {
                    return Ok(hit);
                }
            }
        }

        let schema: Option<Value> = match &req.output_schema {
            Some(raw) => Some(
                serde_json::from_str(raw)
                    .map_err(|e| GatewayError::BadReply(format!("invalid output schema: {e}")))?,
            ),
            None => None,
        };

        let mut attempt_req = req.clone();
        let mut last_errors = Vec::new();
        for attempt in 0..=self.config.repair_attempts {
            let reply = self.complete_with_retries(&attempt_req)?;
            let Some(schema) = &schema else {
                let response =
                    ChatResponse { text: reply.text, parsed: None, usage: reply.usage };
                self.store(&fingerprint, req, &response)?;
                return Ok(response);
            };
            match extract_json(&reply.text) {
                Ok(parsed) => {
                    let errors = check_value(&parsed, schema);
                    if errors.is_empty() {
                        let response = ChatResponse {
                            text: reply.text,
                            parsed: Some(parsed),
                            usage: reply.usage,
                        };
                        self.store(&fingerprint, req, &response)?;
                        return Ok(response);
                    }
                    last_errors = errors;
                }
                Err(e) => last_errors = vec![format!("reply is not valid JSON: {e}")],
            }
            if attempt < self.config.repair_attempts {
                attempt_req = repair_request(req, &last_errors);
            }
        }
        Err(GatewayError::SchemaViolation {
            attempts: self.config.repair_attempts,
            errors: last_errors,
        })
    }

    fn complete_with_retries(&self, req: &ChatRequest) -> Result<BackendReply, GatewayError> {
        let _permit = self.in_flight.acquire();
        let attempts = self.config.transport_retries.max(1);
        let mut last = String::new();
        for attempt in 0..attempts {
            match self.chat_backend.complete(req) {
                Ok(reply) => return Ok(reply),
                // Only transport errors are worth retrying.
                Err(GatewayError::Transport { message, .. }) => {
                    last = message;
                    if attempt + 1 < attempts && self.config.backoff_ms > 0 {
                        let backoff = self.config.backoff_ms << attempt;
                        std::thread::sleep(std::time::Duration::from_millis(backoff));
                    }
                }
                Err(other) => return Err(other),
            }
        }
        Err(GatewayError::Transport { attempts, message: last })
    }

    fn store(
        &self,
        fingerprint: &str,
        req: &ChatRequest,
        response: &ChatResponse,
    ) -> Result<(), GatewayError> {
        if let Some(cache) = &self.cache {
            cache.put_chat(fingerprint, req, response)?;
        }
        Ok(())
    }

    /// Embed a batch of texts, order-preserving. Batches are split to the
    /// configured size and each (tag, text) pair is cached individually.
    pub fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, GatewayError> {
        if texts.is_empty() {
            return Err(GatewayError::EmptyBatch);
        }
        let backend = self.embed_backend.as_ref().ok_or(GatewayError::NoEmbedBackend)?;
        let tag = backend.tag();

        let mut results: Vec<Option<Vec<f32>>> = vec![None; texts.len()];
        let mut misses: Vec<usize> = Vec::new();
        for (i, text) in texts.iter().enumerate() {
            let mut hit = None;
            if !self.config.no_cache {
                if let Some(cache) = &self.cache {
                    hit = cache.get_embedding(&tag, text)?;
                }
            }
            match hit {
                Some(v) => results[i] = Some(v),
                None => misses.push(i),
            }
        }

        for chunk in misses.chunks(self.config.embed_batch_size.max(1)) {
            let batch: Vec<String> = chunk.iter().map(|&i| texts[i].clone()).collect();
            let _permit = self.in_flight.acquire();
            let vectors = backend.embed_batch(&batch)?;
            if vectors.len() != batch.len() {
                return Err(GatewayError::BadReply(format!(
                    "embedding backend returned {} vectors for {} inputs",
                    vectors.len(),
                    batch.len()
                )));
            }
            for (&i, vector) in chunk.iter().zip(vectors) {
                if let Some(cache) = &self.cache {
                    cache.put_embedding(&tag, &texts[i], &vector)?;
                }
                results[i] = Some(vector);
            }
        }

        let collected: Vec<Vec<f32>> =
            results.into_iter().map(|v| v.expect("all slots filled")).collect();
        let dim = collected[0].len();
        for v in &collected {
            if v.len() != dim {
                return Err(GatewayError::DimensionMismatch { expected: dim, got: v.len() });
            }
        }
        Ok(collected)
    }
}

fn repair_request(original: &ChatRequest, errors: &[String]) -> ChatRequest {
    let mut user = original.user.clone();
    user.push_str("\n\nYour previous reply did not satisfy the required output schema:\n");
    for e in errors {
        user.push_str("- ");
        user.push_str(e);
        user.push('\n');
    }
    user.push_str("Reply again, following the schema exactly.");
    ChatRequest { user, ..original.clone() }
}

/// Pull the first JSON value out of a completion. Accepts bare JSON, fenced
/// code blocks, or JSON embedded in surrounding prose.
pub fn extract_json(text: &str) -> Result<Value, String> {
    let trimmed = text.trim();
    if let Ok(v) = serde_json::from_str(trimmed) {
        return Ok(v);
    }
    if let Some(start) = trimmed.find("```") {
        let after = &trimmed[start + 3..];
        let after = after.strip_prefix("json").unwrap_or(after);
        if let Some(end) = after.find("```") {
            if let Ok(v) = serde_json::from_str(after[..end].trim()) {
                return Ok(v);
            }
        }
    }
    for (open, close) in [('{', '}'), ('[', ']')] {
        if let (Some(start), Some(end)) = (trimmed.find(open), trimmed.rfind(close)) {
            if start < end {
                if let Ok(v) = serde_json::from_str(&trimmed[start..=end]) {
                    return Ok(v);
                }
            }
        }
    }
    Err("no parseable JSON value found".into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    struct CountingBackend {
        calls: Arc<AtomicUsize>,
        replies: Vec<String>,
    }

    impl ChatBackend for CountingBackend {
        fn complete(&self, _req: &ChatRequest) -> Result<BackendReply, GatewayError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            let text = self.replies.get(n.min(self.replies.len() - 1)).unwrap().clone();
            Ok(BackendReply { text, usage: TokenUsage::default() })
        }
    }

    fn gateway_with(replies: Vec<String>, dir: &std::path::Path) -> (Gateway, Arc<AtomicUsize>) {
        let calls = Arc::new(AtomicUsize::new(0));
        let backend = CountingBackend { calls: calls.clone(), replies };
        let config = GatewayConfig {
            cache_dir: Some(dir.to_path_buf()),
            backoff_ms: 0,
            ..GatewayConfig::default()
        };
        (Gateway::new(Box::new(backend), Some(Box::new(HashEmbedder::new(16))), config), calls)
    }

    #[test]
    fn second_identical_request_is_served_from_cache() {
        let dir = tempfile::tempdir().unwrap();
        let (gw, calls) = gateway_with(vec!["hello".into()], dir.path());
        let req = ChatRequest::new("m", "sys", "user");
        let first = gw.chat(&req).unwrap();
        let second = gw.chat(&req).unwrap();
        assert_eq!(first, second);
        assert_eq!(calls.load(Ordering::SeqCst), 1, "second call must not hit the backend");
    }

    #[test]
    fn cached_replay_is_byte_identical_across_gateways() {
        let dir = tempfile::tempdir().unwrap();
        let req = ChatRequest::new("m", "sys", "user").with_schema(
            json!({"type": "object", "properties": {"x": {"type": "integer"}}, "required": ["x"]})
                .to_string(),
        );
        let (gw, _) = gateway_with(vec![r#"{"x": 3}"#.into()], dir.path());
        let first = gw.chat(&req).unwrap();
        let (gw2, calls2) = gateway_with(vec!["other".into()], dir.path());
        let replay = gw2.chat(&req).unwrap();
        assert_eq!(first, replay);
        assert_eq!(calls2.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn malformed_reply_exhausts_repairs_then_errors() {
        let dir = tempfile::tempdir().unwrap();
        let (gw, calls) = gateway_with(vec!["not json at all".into()], dir.path());
        let req = ChatRequest::new("m", "sys", "user")
            .with_schema(json!({"type": "object"}).to_string());
        let err = gw.chat(&req).unwrap_err();
        assert!(matches!(err, GatewayError::SchemaViolation { attempts: 2, .. }));
        // Initial call plus two repair attempts.
        assert_eq!(calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn repair_loop_recovers_from_one_bad_reply() {
        let dir = tempfile::tempdir().unwrap();
        let schema =
            json!({"type": "object", "properties": {"x": {"type": "integer"}}, "required": ["x"]});
        let (gw, calls) =
            gateway_with(vec![r#"{"y": 1}"#.into(), r#"{"x": 1}"#.into()], dir.path());
        let req = ChatRequest::new("m", "sys", "user").with_schema(schema.to_string());
        let resp = gw.chat(&req).unwrap();
        assert_eq!(resp.parsed, Some(json!({"x": 1})));
        assert_eq!(calls.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn embed_preserves_order_and_batches() {
        let dir = tempfile::tempdir().unwrap();
        let (gw, _) = gateway_with(vec!["unused".into()], dir.path());
        let texts: Vec<String> = (0..300).map(|i| format!("text number {i}")).collect();
        let batched = gw.embed(&texts).unwrap();
        assert_eq!(batched.len(), 300);

        // Same inputs one at a time must give identical vectors.
        for (i, text) in texts.iter().enumerate().step_by(97) {
            let single = gw.embed(std::slice::from_ref(text)).unwrap();
            assert_eq!(single[0], batched[i]);
        }
    }

    #[test]
    fn repeated_text_in_one_batch_embeds_identically() {
        let dir = tempfile::tempdir().unwrap();
        let (gw, _) = gateway_with(vec!["unused".into()], dir.path());
        let texts = vec!["same".to_string(), "same".to_string()];
        let out = gw.embed(&texts).unwrap();
        assert_eq!(out[0], out[1]);
        assert!(matches!(gw.embed(&[]).unwrap_err(), GatewayError::EmptyBatch));
    }

    #[test]
    fn extract_json_handles_fences_and_prose() {
        assert_eq!(extract_json(r#"{"a":1}"#).unwrap(), json!({"a":1}));
        assert_eq!(extract_json("```json\n{\"a\": 1}\n```").unwrap(), json!({"a":1}));
        assert_eq!(extract_json("Sure! Here it is: {\"a\": 1}.").unwrap(), json!({"a":1}));
        assert!(extract_json("no json here").is_err());
    }
}
