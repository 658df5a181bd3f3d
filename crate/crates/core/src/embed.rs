//! Sentence embeddings and cosine similarity.

use std::env;

use serde_json::{json, Value as Json};
use thiserror::Error;

use crate::kb::tokenize;
use crate::llm::{http_client, post_json, ProviderError, RetryPolicy};

pub const DEFAULT_DIM: usize = 384;
pub const EMBED_ENDPOINT_VAR: &str = "FLEX_EMBED_ENDPOINT";
pub const EMBED_KEY_VAR: &str = "FLEX_EMBED_API_KEY";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EmbedError {
    #[error("text is empty after normalization")]
    EmptyText,
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// A unit-length embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// Normalizes `values` to unit length; the zero vector stays zero.
    pub fn normalized(mut values: Vec<f64>) -> EmbeddingVector {
        let norm = values.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for x in &mut values {
                *x /= norm;
            }
        }
        EmbeddingVector(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl std::ops::Neg for &EmbeddingVector {
    type Output = EmbeddingVector;

    fn neg(self) -> EmbeddingVector {
        EmbeddingVector(self.0.iter().map(|x| -x).collect())
    }
}

pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbedError> {
    if a.dim() != b.dim() {
        return Err(EmbedError::DimMismatch(a.dim(), b.dim()));
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    Ok(dot.clamp(-1.0, 1.0))
}

pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError>;

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        Ok(self.embed_batch(&[text])?.remove(0))
    }
}

/// Signed feature hashing of normalized tokens; word order is ignored.
/// With `char_ngrams > 0` each token also contributes its character n-grams
/// (bounded by `<` and `>`), so related word forms land close together.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashedEmbedder {
    pub dim: usize,
    pub char_ngrams: usize,
}

impl Default for HashedEmbedder {
    fn default() -> Self {
        HashedEmbedder { dim: DEFAULT_DIM, char_ngrams: 0 }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl HashedEmbedder {
    pub fn embed_one(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let mut v = vec![0.0; self.dim];
        let mut put = |bytes: &[u8]| {
            let h = fnv1a(bytes);
            let sign = if (h >> 63) & 1 == 1 { -1.0 } else { 1.0 };
            v[(h % self.dim as u64) as usize] += sign;
        };
        for t in tokens {
            put(t.as_bytes());
            if self.char_ngrams == 0 {
                continue;
            }
            let chars: Vec<char> = format!("<{t}>").chars().collect();
            for gram in chars.windows(self.char_ngrams) {
                put(format!("#{}", gram.iter().collect::<String>()).as_bytes());
            }
        }
        Ok(EmbeddingVector::normalized(v))
    }
}

impl Embedder for HashedEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        texts.iter().map(|t| self.embed_one(t)).collect()
    }
}

/// Embedding service speaking `{input, model}` and returning either
/// `{"data":[{"embedding":[...]}, ...]}` or a bare list of vectors.
pub struct RemoteEmbedder {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    dim: usize,
    retry: RetryPolicy,
    client: reqwest::blocking::Client,
}

impl RemoteEmbedder {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, api_key: Option<String>, dim: usize, retry: RetryPolicy) -> Self {
        RemoteEmbedder { endpoint: endpoint.into(), model: model.into(), api_key, dim, retry, client: http_client() }
    }

    pub fn from_env(model: impl Into<String>, dim: usize, retry: RetryPolicy) -> Result<Self, ProviderError> {
        let endpoint =
            env::var(EMBED_ENDPOINT_VAR).map_err(|_| ProviderError::Config(format!("{EMBED_ENDPOINT_VAR} is not set")))?;
        Ok(RemoteEmbedder::new(endpoint, model, env::var(EMBED_KEY_VAR).ok(), dim, retry))
    }
}

fn parse_vectors(resp: &Json) -> Option<Vec<Vec<f64>>> {
    let list = resp.get("data").unwrap_or(resp).as_array()?;
    list.iter()
        .map(|item| {
            let arr = item.get("embedding").unwrap_or(item).as_array()?;
            arr.iter().map(Json::as_f64).collect::<Option<Vec<f64>>>()
        })
        .collect()
}

impl Embedder for RemoteEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        if texts.iter().any(|t| tokenize(t).is_empty()) {
            return Err(EmbedError::EmptyText);
        }
        let body = json!({"input": texts, "model": self.model});
        let resp = post_json(&self.client, &self.endpoint, self.api_key.as_deref(), &body, self.retry)?;
        let vectors = parse_vectors(&resp).ok_or_else(|| ProviderError::Decode("expected a list of vectors".into()))?;
        if vectors.len() != texts.len() {
            return Err(ProviderError::Decode(format!("expected {} vectors, got {}", texts.len(), vectors.len())).into());
        }
        vectors
            .into_iter()
            .map(|v| {
                if v.len() != self.dim {
                    Err(EmbedError::DimMismatch(v.len(), self.dim))
                } else if v.iter().any(|x| !x.is_finite()) {
                    Err(ProviderError::Decode("non-finite embedding entry".into()).into())
                } else {
                    Ok(EmbeddingVector::normalized(v))
                }
            })
            .collect()
    }
}
