//! Text-to-vector providers used by the relevancy score.
//!
//! The default [`HashingEmbedder`] is a signed feature-hashing bag of words:
//! ASCII case-folded alphanumeric tokens are hashed with 64-bit FNV-1a, the
//! low bits pick a bucket (`hash % dimension`), the top bit picks the sign,
//! and the accumulated vector is L2-normalized. FNV-1a has no per-process
//! seed, so vectors are identical across runs and platforms.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_DIMENSION: usize = 256;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbeddingError {
    #[error("degenerate embedding: {0}")]
    DegenerateEmbedding(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),
}

/// A unit-norm embedding vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// Normalizes `values` to unit L2 norm.
    pub fn new(values: Vec<f64>) -> Result<Self, EmbeddingError> {
        let norm = l2_norm(&values);
        if values.is_empty() || !norm.is_finite() || norm == 0.0 {
            return Err(EmbeddingError::DegenerateEmbedding(
                "vector has zero or non-finite norm".into(),
            ));
        }
        Ok(Self(values.into_iter().map(|v| v / norm).collect()))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn cosine(&self, other: &EmbeddingVector) -> Result<f64, EmbeddingError> {
        cosine_similarity(&self.0, &other.0)
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = EmbeddingError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        // Stored vectors are already unit-norm; keep them bit-exact when they are.
        let norm = l2_norm(&values);
        if (norm - 1.0).abs() <= 1e-9 {
            Ok(Self(values))
        } else {
            Self::new(values)
        }
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.0
    }
}

fn l2_norm(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Cosine similarity of two raw vectors.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, EmbeddingError> {
    if a.len() != b.len() {
        return Err(EmbeddingError::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let (na, nb) = (l2_norm(a), l2_norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(EmbeddingError::DegenerateEmbedding(
            "zero-norm vector in cosine similarity".into(),
        ));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

pub trait Embedder {
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError>;
}

/// Splits on anything that is not ASCII alphanumeric and ASCII-lowercases.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_ascii_lowercase())
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, b| (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashingEmbedder {
    dimension: usize,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_DIMENSION)
    }
}

impl HashingEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self { dimension }
    }
}

impl Embedder for HashingEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        let mut values = vec![0.0; self.dimension];
        let mut tokens = 0usize;
        for token in tokenize(text) {
            let h = fnv1a(token.as_bytes());
            let bucket = (h % self.dimension as u64) as usize;
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            values[bucket] += sign;
            tokens += 1;
        }
        if tokens == 0 {
            return Err(EmbeddingError::DegenerateEmbedding(format!(
                "no alphanumeric tokens in {text:?}"
            )));
        }
        EmbeddingVector::new(values)
    }
}

#[cfg(feature = "remote")]
pub use remote::HttpEmbedder;

#[cfg(feature = "remote")]
mod remote {
    use super::{Embedder, EmbeddingError, EmbeddingVector};
    use serde::{Deserialize, Serialize};
    use std::time::Duration;

    #[derive(Serialize)]
    struct EmbedRequest<'a> {
        texts: &'a [&'a str],
    }

    #[derive(Deserialize)]
    struct EmbedResponse {
        vectors: Vec<Vec<f64>>,
    }

    /// External provider: `POST {texts: [..]}` answered by `{vectors: [[..]]}`.
    pub struct HttpEmbedder {
        endpoint: String,
        dimension: usize,
        agent: ureq::Agent,
    }

    impl HttpEmbedder {
        pub fn new(endpoint: impl Into<String>, dimension: usize, timeout: Duration) -> Self {
            let agent = ureq::Agent::config_builder()
                .timeout_global(Some(timeout))
                .build()
                .into();
            Self {
                endpoint: endpoint.into(),
                dimension,
                agent,
            }
        }

        pub fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
            let response: EmbedResponse = self
                .agent
                .post(&self.endpoint)
                .send_json(EmbedRequest { texts })
                .map_err(|e| EmbeddingError::ProviderUnavailable(e.to_string()))?
                .body_mut()
                .read_json()
                .map_err(|e| EmbeddingError::ProviderUnavailable(e.to_string()))?;
            if response.vectors.len() != texts.len() {
                return Err(EmbeddingError::ProviderUnavailable(format!(
                    "asked for {} vectors, provider returned {}",
                    texts.len(),
                    response.vectors.len()
                )));
            }
            response
                .vectors
                .into_iter()
                .map(|v| {
                    if v.len() != self.dimension {
                        return Err(EmbeddingError::DimensionMismatch {
                            expected: self.dimension,
                            actual: v.len(),
                        });
                    }
                    EmbeddingVector::new(v)
                })
                .collect()
        }
    }

    impl Embedder for HttpEmbedder {
        fn dimension(&self) -> usize {
            self.dimension
        }

        fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
            Ok(self.embed_batch(&[text])?.remove(0))
        }
    }
}
