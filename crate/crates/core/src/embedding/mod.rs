//! Text-to-vector interface shared by retrieval and grounding.
//!
//! Retrieval and grounding each hold their own [`Embedder`]; the built-in
//! [`HashEmbedder`] needs no model files, while [`VectorTable`] and
//! [`RemoteEmbedder`] plug in vectors produced by real sentence encoders.

mod hash;
mod remote;
mod table;

use thiserror::Error;

pub use hash::{HashEmbedder, DEFAULT_DIM};
pub use remote::{RemoteEmbedder, EMBED_ENDPOINT_ENV};
pub use table::{load_external_vectors, read_external_vectors, VectorTable};

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("non-finite value in vector")]
    NonFinite,
    #[error("expected dimension {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("no vector for key {0:?}")]
    UnknownKey(String),
    #[error("embedding endpoint: {0}")]
    Remote(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// A unit-length vector, or the flagged zero vector of empty input.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector {
    values: Vec<f64>,
    empty: bool,
}

impl Vector {
    /// Normalizes `values` to unit length. An all-zero input becomes the flagged
    /// empty vector.
    pub fn from_raw(mut values: Vec<f64>) -> Result<Self, EmbeddingError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite);
        }
        let norm = l2_norm(&values);
        if norm == 0.0 {
            return Ok(Self { values, empty: true });
        }
        for v in &mut values {
            *v /= norm;
        }
        Ok(Self { values, empty: false })
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            values: vec![0.0; dim],
            empty: true,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// True for the zero vector produced from empty text.
    pub fn is_empty(&self) -> bool {
        self.empty
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.values)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity clamped to `[-1, 1]`; zero when either side is empty.
///
/// Panics when the dimensions differ.
pub fn cosine(a: &Vector, b: &Vector) -> f64 {
    assert_eq!(a.dim(), b.dim(), "cosine of vectors with different dimensions");
    if a.empty || b.empty {
        return 0.0;
    }
    let denom = a.norm() * b.norm();
    if denom == 0.0 {
        return 0.0;
    }
    (dot(&a.values, &b.values) / denom).clamp(-1.0, 1.0)
}

/// Maps text to vectors of a fixed dimension.
pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;

    fn embed(&self, text: &str) -> Result<Vector, EmbeddingError>;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vector>, EmbeddingError> {
        texts.iter().map(|t| self.embed(t)).collect()
    }
}

impl<E: Embedder + ?Sized> Embedder for std::sync::Arc<E> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn embed(&self, text: &str) -> Result<Vector, EmbeddingError> {
        (**self).embed(text)
    }
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vector>, EmbeddingError> {
        (**self).embed_batch(texts)
    }
}

impl<E: Embedder + ?Sized> Embedder for Box<E> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn embed(&self, text: &str) -> Result<Vector, EmbeddingError> {
        (**self).embed(text)
    }
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vector>, EmbeddingError> {
        (**self).embed_batch(texts)
    }
}
