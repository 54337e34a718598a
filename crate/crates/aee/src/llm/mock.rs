//! Scripted chat backend replaying canned transcripts.
//!
//! A transcript maps request fingerprints (or substring matchers, which are
//! easier to author by hand) to canned replies. Requests that match no entry
//! are an error, so a drifting prompt fails tests loudly instead of silently
//! producing garbage.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::{BackendReply, ChatBackend, ChatRequest, GatewayError, TokenUsage};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TranscriptEntry {
    /// Exact fingerprint match, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fingerprint: Option<String>,
    /// All listed substrings must occur in the system prompt.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub system_contains: Vec<String>,
    /// All listed substrings must occur in the user prompt.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub user_contains: Vec<String>,
    pub reply: String,
}

impl TranscriptEntry {
    fn matches(&self, req: &ChatRequest, fingerprint: &str) -> bool {
        if let Some(fp) = &self.fingerprint {
            return fp == fingerprint;
        }
        if self.system_contains.is_empty() && self.user_contains.is_empty() {
            return false;
        }
        self.system_contains.iter().all(|s| req.system.contains(s))
            && self.user_contains.iter().all(|s| req.user.contains(s))
    }
}

pub struct MockChatBackend {
    entries: Vec<TranscriptEntry>,
    calls: AtomicUsize,
}

impl MockChatBackend {
    pub fn new(entries: Vec<TranscriptEntry>) -> Self {
        MockChatBackend { entries, calls: AtomicUsize::new(0) }
    }

    /// Load a transcript file: either a bare JSON array of entries or an
    /// object `{"entries": [...]}`.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let raw = std::fs::read_to_string(path.as_ref())?;
        Self::from_json(&raw)
    }

    pub fn from_json(raw: &str) -> Result<Self, GatewayError> {
        let value: serde_json::Value = serde_json::from_str(raw)
            .map_err(|e| GatewayError::BadReply(format!("invalid transcript: {e}")))?;
        let entries = if value.is_array() { value } else { value["entries"].clone() };
        let entries: Vec<TranscriptEntry> = serde_json::from_value(entries)
            .map_err(|e| GatewayError::BadReply(format!("invalid transcript: {e}")))?;
        Ok(Self::new(entries))
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatBackend for MockChatBackend {
    fn complete(&self, req: &ChatRequest) -> Result<BackendReply, GatewayError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let fingerprint = req.fingerprint();
        for entry in &self.entries {
            if entry.matches(req, &fingerprint) {
                return Ok(BackendReply { text: entry.reply.clone(), usage: TokenUsage::default() });
            }
        }
        let preview: String = req.user.chars().take(80).collect();
        Err(GatewayError::UnmatchedRequest { fingerprint, preview })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_by_fingerprint_and_by_substring() {
        let req = ChatRequest::new("m", "detect events", "the article body");
        let by_fp = TranscriptEntry {
            fingerprint: Some(req.fingerprint()),
            system_contains: vec![],
            user_contains: vec![],
            reply: "A".into(),
        };
        let by_sub = TranscriptEntry {
            fingerprint: None,
            system_contains: vec!["detect".into()],
            user_contains: vec!["article".into()],
            reply: "B".into(),
        };
        let mock = MockChatBackend::new(vec![by_fp]);
        assert_eq!(mock.complete(&req).unwrap().text, "A");
        let mock = MockChatBackend::new(vec![by_sub]);
        assert_eq!(mock.complete(&req).unwrap().text, "B");
    }

    #[test]
    fn unknown_request_is_an_error() {
        let mock = MockChatBackend::new(vec![]);
        let err = mock.complete(&ChatRequest::new("m", "s", "u")).unwrap_err();
        assert!(matches!(err, GatewayError::UnmatchedRequest { .. }));
    }
}
