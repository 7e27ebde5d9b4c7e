use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Embedder, EmbeddingError, Vector};

/// Environment variable holding the embedding endpoint base URL.
pub const EMBED_ENDPOINT_ENV: &str = "MEMREC_EMBED_ENDPOINT";

/// Client for an HTTP embedding service.
///
/// `POST {base}/embed` with `{"texts": [...]}`; the response is
/// `{"vectors": [[...], ...]}` in request order. Vectors are normalized on receipt.
#[derive(Debug, Clone)]
pub struct RemoteEmbedder {
    base_url: String,
    dim: usize,
    agent: ureq::Agent,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

impl RemoteEmbedder {
    /// `dim` is the dimension the service is expected to return.
    pub fn new(base_url: impl Into<String>, dim: usize) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(60)))
            .build()
            .into();
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            dim,
            agent,
        }
    }

    /// Reads the base URL from [`EMBED_ENDPOINT_ENV`].
    pub fn from_env(dim: usize) -> Option<Self> {
        std::env::var(EMBED_ENDPOINT_ENV)
            .ok()
            .filter(|s| !s.is_empty())
            .map(|url| Self::new(url, dim))
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }
}

impl Embedder for RemoteEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vector, EmbeddingError> {
        let mut batch = self.embed_batch(&[text])?;
        batch
            .pop()
            .ok_or_else(|| EmbeddingError::Remote("empty response".into()))
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vector>, EmbeddingError> {
        let url = format!("{}/embed", self.base_url);
        let mut response = self
            .agent
            .post(&url)
            .send_json(EmbedRequest { texts })
            .map_err(|e| EmbeddingError::Remote(e.to_string()))?;
        let body: EmbedResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| EmbeddingError::Remote(e.to_string()))?;
        if body.vectors.len() != texts.len() {
            return Err(EmbeddingError::Remote(format!(
                "asked for {} vectors, got {}",
                texts.len(),
                body.vectors.len()
            )));
        }
        texts
            .iter()
            .zip(body.vectors)
            .map(|(text, values)| {
                if text.trim().is_empty() {
                    return Ok(Vector::empty(self.dim));
                }
                if values.len() != self.dim {
                    return Err(EmbeddingError::Dimension {
                        expected: self.dim,
                        got: values.len(),
                    });
                }
                Vector::from_raw(values)
            })
            .collect()
    }
}
