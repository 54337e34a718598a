//! Deterministic seeded embedder for tests and offline runs.
//!
//! Texts are embedded as a bag of hashed tokens: every lowercased token maps
//! to a fixed pseudo-random unit direction derived from its SHA-256 digest,
//! and the text vector is the L2-normalized token sum. Shared vocabulary
//! therefore yields high cosine similarity, which is enough structure for
//! retrieval tests while staying fully deterministic across runs and
//! platforms.

use sha2::{Digest, Sha256};

use super::{EmbedBackend, GatewayError};

#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        HashEmbedder { dim: dim.max(4) }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn token_vector(&self, token: &str) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.dim);
        let mut block_index: u64 = 0;
        while out.len() < self.dim {
            let mut hasher = Sha256::new();
            hasher.update((self.dim as u64).to_le_bytes());
            hasher.update(block_index.to_le_bytes());
            hasher.update(token.as_bytes());
            let digest = hasher.finalize();
            for chunk in digest.chunks_exact(4) {
                if out.len() == self.dim {
                    break;
                }
                let raw = u32::from_le_bytes(chunk.try_into().unwrap());
                // Map to [-1, 1).
                out.push((raw as f64 / u32::MAX as f64 * 2.0 - 1.0) as f32);
            }
            block_index += 1;
        }
        out
    }

    pub fn embed_one(&self, text: &str) -> Vec<f32> {
        let mut sum = vec![0f32; self.dim];
        let mut tokens = 0usize;
        for token in text
            .to_lowercase()
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
        {
            tokens += 1;
            for (acc, v) in sum.iter_mut().zip(self.token_vector(token)) {
                *acc += v;
            }
        }
        if tokens == 0 {
            sum = self.token_vector("");
        }
        l2_normalize(&mut sum);
        sum
    }
}

pub fn l2_normalize(vector: &mut [f32]) {
    let norm: f32 = vector.iter().map(|v| v * v).sum::<f32>().sqrt();
    if norm > 0.0 {
        for v in vector.iter_mut() {
            *v /= norm;
        }
    }
}

impl EmbedBackend for HashEmbedder {
    fn tag(&self) -> String {
        format!("hash-v1:{}", self.dim)
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, GatewayError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_unit_norm() {
        let embedder = HashEmbedder::new(32);
        let a = embedder.embed_one("Police forces of the United States");
        let b = embedder.embed_one("Police forces of the United States");
        assert_eq!(a, b);
        let norm: f32 = a.iter().map(|v| v * v).sum::<f32>().sqrt();
        assert!((norm - 1.0).abs() < 1e-5);
    }

    #[test]
    fn token_overlap_raises_similarity() {
        let embedder = HashEmbedder::new(64);
        let base = embedder.embed_one("students gather for a protest in the capital");
        let close = embedder.embed_one("students gather for a large protest in the capital");
        let far = embedder.embed_one("artillery shelling reported near the frontline villages");
        let dot = |x: &[f32], y: &[f32]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f32>();
        assert!(dot(&base, &close) > dot(&base, &far));
    }

    #[test]
    fn empty_text_embeds_deterministically() {
        let embedder = HashEmbedder::new(16);
        assert_eq!(embedder.embed_one(""), embedder.embed_one("   "));
    }
}
