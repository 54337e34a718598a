//! Content-addressed on-disk cache for chat completions and embeddings.
//!
//! Layout: `<root>/chat/<aa>/<fingerprint>.json` and
//! `<root>/embed/<aa>/<key>.json`. Writes go through a temp file followed by
//! a rename, so concurrent writers never expose partial entries.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ChatRequest, ChatResponse};

static TEMP_COUNTER: AtomicU64 = AtomicU64::new(0);

pub struct DiskCache {
    root: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct ChatEntry {
    fingerprint: String,
    model: String,
    response: ChatResponse,
}

#[derive(Serialize, Deserialize)]
struct EmbedEntry {
    tag: String,
    vector: Vec<f32>,
}

impl DiskCache {
    pub fn new(root: PathBuf) -> Self {
        DiskCache { root }
    }

    fn slot(&self, namespace: &str, key: &str) -> PathBuf {
        let shard = &key[..2.min(key.len())];
        self.root.join(namespace).join(shard).join(format!("{key}.json"))
    }

    pub fn get_chat(&self, fingerprint: &str) -> std::io::Result<Option<ChatResponse>> {
        let path = self.slot("chat", fingerprint);
        if !path.exists() {
            return Ok(None);
        }
        let raw = std::fs::read_to_string(path)?;
        match serde_json::from_str::<ChatEntry>(&raw) {
            Ok(entry) => Ok(Some(entry.response)),
            // A corrupt entry is treated as a miss and will be rewritten.
            Err(_) => Ok(None),
        }
    }

    pub fn put_chat(
        &self,
        fingerprint: &str,
        req: &ChatRequest,
        response: &ChatResponse,
    ) -> std::io::Result<()> {
        let entry = ChatEntry {
            fingerprint: fingerprint.to_string(),
            model: req.model.clone(),
            response: response.clone(),
        };
        let body = serde_json::to_vec_pretty(&entry).expect("cache entry serializes");
        self.write_atomic(&self.slot("chat", fingerprint), &body)
    }

    fn embed_key(tag: &str, text: &str) -> String {
        let mut hasher = Sha256::new();
        hasher.update((tag.len() as u64).to_le_bytes());
        hasher.update(tag.as_bytes());
        hasher.update(text.as_bytes());
        hex::encode(hasher.finalize())
    }

    pub fn get_embedding(&self, tag: &str, text: &str) -> std::io::Result<Option<Vec<f32>>> {
        let path = self.slot("embed", &Self::embed_key(tag, text));
        if !path.exists() {
            return Ok(None);
        }
        let raw = std::fs::read_to_string(path)?;
        match serde_json::from_str::<EmbedEntry>(&raw) {
            Ok(entry) if entry.tag == tag => Ok(Some(entry.vector)),
            _ => Ok(None),
        }
    }

    pub fn put_embedding(&self, tag: &str, text: &str, vector: &[f32]) -> std::io::Result<()> {
        let entry = EmbedEntry { tag: tag.to_string(), vector: vector.to_vec() };
        let body = serde_json::to_vec(&entry).expect("cache entry serializes");
        self.write_atomic(&self.slot("embed", &Self::embed_key(tag, text)), &body)
    }

    fn write_atomic(&self, path: &Path, body: &[u8]) -> std::io::Result<()> {
        let parent = path.parent().expect("cache slot has a parent");
        std::fs::create_dir_all(parent)?;
        let nonce = TEMP_COUNTER.fetch_add(1, Ordering::Relaxed);
        let tmp = parent.join(format!(
            ".tmp-{}-{}-{}",
            std::process::id(),
            nonce,
            path.file_name().unwrap().to_string_lossy()
        ));
        {
            let mut file = std::fs::File::create(&tmp)?;
            file.write_all(body)?;
            file.sync_all()?;
        }
        std::fs::rename(&tmp, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::TokenUsage;

    #[test]
    fn chat_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DiskCache::new(dir.path().to_path_buf());
        let req = ChatRequest::new("m", "s", "u");
        let resp = ChatResponse {
            text: "hi".into(),
            parsed: None,
            usage: TokenUsage { prompt_tokens: 1, completion_tokens: 2 },
        };
        let fp = req.fingerprint();
        assert!(cache.get_chat(&fp).unwrap().is_none());
        cache.put_chat(&fp, &req, &resp).unwrap();
        assert_eq!(cache.get_chat(&fp).unwrap(), Some(resp));
    }

    #[test]
    fn embedding_roundtrip_checks_tag() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DiskCache::new(dir.path().to_path_buf());
        cache.put_embedding("tag-a", "text", &[0.5, 0.5]).unwrap();
        assert_eq!(cache.get_embedding("tag-a", "text").unwrap(), Some(vec![0.5, 0.5]));
        assert_eq!(cache.get_embedding("tag-b", "text").unwrap(), None);
    }
}
