use std::collections::HashMap;
use std::sync::Arc;

use parking_lot::RwLock;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::GatewayError;
use crate::rng::derived_rng;

/// Lowercases and splits on runs of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingCapability {
    TokenLevel,
    SentenceOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenEmbeddings {
    pub tokens: Vec<String>,
    pub vectors: Vec<Arc<[f64]>>,
    pub dimension: usize,
}

impl TokenEmbeddings {
    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Mean of the token vectors, or `None` when there are no tokens.
    pub fn mean_pooled(&self) -> Option<Vec<f64>> {
        if self.vectors.is_empty() {
            return None;
        }
        let mut acc = vec![0.0; self.dimension];
        for v in &self.vectors {
            for (a, x) in acc.iter_mut().zip(v.iter()) {
                *a += x;
            }
        }
        let n = self.vectors.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        Some(acc)
    }
}

pub trait Embedder: Send + Sync {
    fn capability(&self) -> EmbeddingCapability;

    fn embed_tokens(&self, text: &str) -> Result<TokenEmbeddings, GatewayError>;

    /// Native sentence vector, when the backend has one.
    fn embed_sentence(&self, _text: &str) -> Result<Option<Vec<f64>>, GatewayError> {
        Ok(None)
    }
}

impl<E: Embedder + ?Sized> Embedder for &E {
    fn capability(&self) -> EmbeddingCapability {
        (**self).capability()
    }

    fn embed_tokens(&self, text: &str) -> Result<TokenEmbeddings, GatewayError> {
        (**self).embed_tokens(text)
    }

    fn embed_sentence(&self, text: &str) -> Result<Option<Vec<f64>>, GatewayError> {
        (**self).embed_sentence(text)
    }
}

/// Cosine similarity; zero when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

pub(crate) fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Deterministic offline embedder: every distinct token gets a Gaussian
/// direction drawn from a stream keyed by `(seed, token)`.
pub struct StubEmbedder {
    dimension: usize,
    seed: u64,
    memo: RwLock<HashMap<String, Arc<[f64]>>>,
}

impl StubEmbedder {
    pub const MIN_DIMENSION: usize = 8;

    pub fn new(dimension: usize, seed: u64) -> Result<Self, GatewayError> {
        if dimension < Self::MIN_DIMENSION {
            return Err(GatewayError::InvalidRequest(format!(
                "stub embedder dimension must be >= {}, got {dimension}",
                Self::MIN_DIMENSION
            )));
        }
        Ok(Self {
            dimension,
            seed,
            memo: RwLock::new(HashMap::new()),
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn vector(&self, token: &str) -> Arc<[f64]> {
        if let Some(v) = self.memo.read().get(token) {
            return Arc::clone(v);
        }
        let mut rng = derived_rng(self.seed, &format!("embed/{token}"));
        let mut v: Vec<f64> = (0..self.dimension).map(|_| rng.sample(StandardNormal)).collect();
        normalize(&mut v);
        let v: Arc<[f64]> = v.into();
        self.memo.write().insert(token.to_string(), Arc::clone(&v));
        v
    }
}

impl Embedder for StubEmbedder {
    fn capability(&self) -> EmbeddingCapability {
        EmbeddingCapability::TokenLevel
    }

    fn embed_tokens(&self, text: &str) -> Result<TokenEmbeddings, GatewayError> {
        let tokens = tokenize(text);
        let vectors = tokens.iter().map(|t| self.vector(t)).collect();
        Ok(TokenEmbeddings {
            tokens,
            vectors,
            dimension: self.dimension,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_hand_cases() {
        assert_eq!(tokenize("INR 1.6"), vec!["inr", "1", "6"]);
        assert_eq!(tokenize("HCO3-12, pH-7.20"), vec!["hco3", "12", "ph", "7", "20"]);
        assert!(tokenize("").is_empty());
        assert!(tokenize(" -- ").is_empty());
    }

    #[test]
    fn stub_vectors_are_unit_and_stable() {
        let e = StubEmbedder::new(32, 7).unwrap();
        let a = e.embed_tokens("INR 1.6").unwrap();
        assert_eq!(a.tokens.len(), 3);
        for v in &a.vectors {
            let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
        }
        let fresh = StubEmbedder::new(32, 7).unwrap();
        assert_eq!(fresh.embed_tokens("INR 1.6").unwrap(), a);
        assert_eq!(cosine(&e.vector("fever"), &e.vector("fever")), 1.0);
        assert!(e.embed_tokens("").unwrap().is_empty());
    }

    #[test]
    fn seeds_differ() {
        let a = StubEmbedder::new(16, 1).unwrap();
        let b = StubEmbedder::new(16, 2).unwrap();
        assert_ne!(a.vector("fever"), b.vector("fever"));
    }

    #[test]
    fn small_dimension_rejected() {
        assert!(StubEmbedder::new(7, 0).is_err());
    }

    #[test]
    fn random_pairs_are_nearly_orthogonal_at_256() {
        let e = StubEmbedder::new(256, 11).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..1000 {
            let c = cosine(&e.vector(&format!("tok{i}a")), &e.vector(&format!("tok{i}b")));
            worst = worst.max(c.abs());
        }
        // sd of the cosine is 1/sqrt(256) = 0.0625, so 0.5 is eight sigmas out.
        assert!(worst < 0.5, "max |cos| = {worst}");
    }
}
