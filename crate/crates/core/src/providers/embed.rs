//! Hashed bag-of-words embeddings.

use super::protocol::{EmbedRequest, EmbedResponse};
use super::{Embedder, ProviderError};
use crate::tokenizer::{SimpleTokenizer, Tokenizer};

pub const DEFAULT_DIM: usize = 256;

/// FNV-1a, 64 bit. Stable across platforms and compiler versions.
pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Each lowercased word adds a signed unit to a hashed bucket; the result is
/// L2-normalized. Text without words maps to the first basis vector.
#[derive(Debug, Clone)]
pub struct HashedBowEmbedder {
    dim: usize,
}

impl Default for HashedBowEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_DIM)
    }
}

impl HashedBowEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embed_text(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for tok in SimpleTokenizer.tokenize(text) {
            let word = tok.surface(text);
            if !word.chars().any(char::is_alphanumeric) {
                continue;
            }
            let h = fnv1a(word.to_lowercase().as_bytes());
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            v[(h % self.dim as u64) as usize] += sign;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            v[0] = 1.0;
        } else {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

impl Embedder for HashedBowEmbedder {
    fn embed(&self, req: &EmbedRequest) -> Result<EmbedResponse, ProviderError> {
        Ok(EmbedResponse {
            vectors: req.texts.iter().map(|t| self.embed_text(t)).collect(),
        })
    }
}

/// Cosine similarity of two unit vectors.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn vectors_are_unit_norm() {
        let e = HashedBowEmbedder::default();
        let resp = e
            .embed(&EmbedRequest {
                texts: vec!["cats sleep".into(), "".into(), "!!!".into(), "a b c d e f g".into()],
            })
            .unwrap();
        resp.check(4).unwrap();
    }

    #[test]
    fn similar_texts_score_higher() {
        let e = HashedBowEmbedder::default();
        let q = e.embed_text("where do the kittens play");
        let near = e.embed_text("the kittens play in the garden");
        let far = e.embed_text("stock prices fell sharply on monday");
        assert!(cosine(&q, &near) > cosine(&q, &far));
        assert!((cosine(&near, &near) - 1.0).abs() < 1e-12);
        assert_eq!(e.embed_text("Cats"), e.embed_text("cats"));
    }
}
