//! Flat dense index over memory documents.
//!
//! Every document is embedded once at build time; a query is scored against every
//! row and the top hits are returned. Retrieval always hands back exactly one
//! passage, or the empty placeholder when nothing can be retrieved.

use std::cmp::Ordering;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use crate::corpus::{corpus_digest, MemoryDocument};
use crate::embedding::{dot, Embedder, EmbeddingError, Vector};

const MAGIC: &[u8; 8] = b"MRFLAT01";

/// Passage returned when retrieval fails or the index is empty.
pub const BLANK_PLACEHOLDER: &str = "";

#[derive(Debug, Error)]
pub enum IndexError {
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("document {doc_id} is out of place (expected id {expected})")]
    NonDenseIds { doc_id: usize, expected: usize },
    #[error("index was built for corpus {stored} but the corpus given has digest {given}")]
    DigestMismatch { stored: String, given: String },
    #[error("index file: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hit {
    pub doc_id: usize,
    pub score: f64,
    pub text: String,
}

pub struct FlatIndex {
    dim: usize,
    rows: Vec<f64>,
    docs: Vec<MemoryDocument>,
    digest: String,
    embedder: Arc<dyn Embedder>,
}

impl std::fmt::Debug for FlatIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FlatIndex")
            .field("dim", &self.dim)
            .field("len", &self.docs.len())
            .field("digest", &self.digest)
            .finish()
    }
}

/// Descending score, then ascending id.
pub(crate) fn rank_order(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

/// Indices and scores of the `k` best entries under [`rank_order`].
pub(crate) fn top_k(mut scored: Vec<(f64, usize)>, k: usize) -> Vec<(f64, usize)> {
    if k == 0 {
        return Vec::new();
    }
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, rank_order);
        scored.truncate(k);
    }
    scored.sort_unstable_by(rank_order);
    scored
}

impl FlatIndex {
    /// Embeds every document. Ids must be dense from zero in order.
    pub fn build(docs: Vec<MemoryDocument>, embedder: Arc<dyn Embedder>) -> Result<Self, IndexError> {
        for (expected, d) in docs.iter().enumerate() {
            if d.doc_id != expected {
                return Err(IndexError::NonDenseIds {
                    doc_id: d.doc_id,
                    expected,
                });
            }
        }
        let dim = embedder.dim();
        let mut rows = Vec::with_capacity(dim * docs.len());
        for chunk in docs.chunks(256) {
            let texts: Vec<&str> = chunk.iter().map(|d| d.text.as_str()).collect();
            for v in embedder.embed_batch(&texts)? {
                if v.dim() != dim {
                    return Err(EmbeddingError::Dimension {
                        expected: dim,
                        got: v.dim(),
                    }
                    .into());
                }
                rows.extend_from_slice(v.values());
            }
        }
        let digest = corpus_digest(&docs);
        Ok(Self {
            dim,
            rows,
            docs,
            digest,
            embedder,
        })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn docs(&self) -> &[MemoryDocument] {
        &self.docs
    }

    pub fn row(&self, doc_id: usize) -> &[f64] {
        &self.rows[doc_id * self.dim..(doc_id + 1) * self.dim]
    }

    /// Digest of the corpus this index was built from.
    pub fn corpus_digest(&self) -> &str {
        &self.digest
    }

    pub fn embedder(&self) -> &Arc<dyn Embedder> {
        &self.embedder
    }

    /// Top `k` documents for an already embedded query.
    pub fn search_vector(&self, query: &Vector, k: usize) -> Vec<Hit> {
        let scored: Vec<(f64, usize)> = (0..self.docs.len())
            .map(|id| {
                let s = if query.is_empty() {
                    0.0
                } else {
                    dot(query.values(), self.row(id)).clamp(-1.0, 1.0)
                };
                (s, id)
            })
            .collect();
        top_k(scored, k)
            .into_iter()
            .map(|(score, doc_id)| Hit {
                doc_id,
                score,
                text: self.docs[doc_id].text.clone(),
            })
            .collect()
    }

    /// Top `min(k, len)` documents by cosine similarity, ties by ascending id.
    pub fn search(&self, query: &str, k: usize) -> Result<Vec<Hit>, IndexError> {
        if self.docs.is_empty() || k == 0 {
            return Ok(Vec::new());
        }
        let q = self.embedder.embed(query)?;
        Ok(self.search_vector(&q, k))
    }

    /// Text of the single best document, or [`BLANK_PLACEHOLDER`].
    pub fn retrieve(&self, query: &str) -> String {
        match self.search(query, 1) {
            Ok(mut hits) if !hits.is_empty() => hits.swap_remove(0).text,
            Ok(_) => BLANK_PLACEHOLDER.to_string(),
            Err(e) => {
                log::warn!("retrieval failed, returning placeholder: {e}");
                BLANK_PLACEHOLDER.to_string()
            }
        }
    }

    /// Binary layout: magic, `u32` dimension, `u64` row count, row-major `f64`
    /// values, then the 64-byte hex corpus digest. All integers little endian.
    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        let mut buf = Vec::with_capacity(8 + 4 + 8 + self.rows.len() * 8 + 64);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&(self.dim as u32).to_le_bytes());
        buf.extend_from_slice(&(self.docs.len() as u64).to_le_bytes());
        for v in &self.rows {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(self.digest.as_bytes());
        fs::File::create(path)?.write_all(&buf)?;
        Ok(())
    }

    /// Loads a saved index against its corpus; refuses a corpus whose digest
    /// differs from the one recorded at build time.
    pub fn load(
        path: &Path,
        docs: Vec<MemoryDocument>,
        embedder: Arc<dyn Embedder>,
    ) -> Result<Self, IndexError> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(IndexError::Format("bad magic".into()));
        }
        let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body = dim
            .checked_mul(count)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| IndexError::Format("size overflow".into()))?;
        if bytes.len() != 20 + body + 64 {
            return Err(IndexError::Format(format!(
                "expected {} bytes, found {}",
                20 + body + 64,
                bytes.len()
            )));
        }
        let rows: Vec<f64> = bytes[20..20 + body]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let stored = String::from_utf8(bytes[20 + body..].to_vec())
            .map_err(|_| IndexError::Format("digest is not text".into()))?;
        let given = corpus_digest(&docs);
        if stored != given {
            return Err(IndexError::DigestMismatch { stored, given });
        }
        if count != docs.len() {
            return Err(IndexError::Format("row count differs from corpus".into()));
        }
        if embedder.dim() != dim {
            return Err(EmbeddingError::Dimension {
                expected: dim,
                got: embedder.dim(),
            }
            .into());
        }
        Ok(Self {
            dim,
            rows,
            docs,
            digest: stored,
            embedder,
        })
    }
}

/// Builds a [`FlatIndex`].
pub fn build_index(docs: Vec<MemoryDocument>, embedder: Arc<dyn Embedder>) -> Result<FlatIndex, IndexError> {
    FlatIndex::build(docs, embedder)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::DocKind;
    use crate::embedding::HashEmbedder;
    use proptest::prelude::*;

    fn docs(texts: &[&str]) -> Vec<MemoryDocument> {
        texts
            .iter()
            .enumerate()
            .map(|(k, t)| MemoryDocument {
                doc_id: k,
                kind: DocKind::Meta,
                source_ref: format!("i{k}"),
                text: t.to_string(),
            })
            .collect()
    }

    fn index(texts: &[&str]) -> FlatIndex {
        FlatIndex::build(docs(texts), Arc::new(HashEmbedder::default())).unwrap()
    }

    const TEXTS: [&str; 8] = [
        "User 1 History: [Matrix, Inception]",
        "User 2 History: [Dune, Emma]",
        "User 3 History: [Heat, Alien]",
        "Movie Name: Inception; Director: Nolan",
        "Movie Name: Dune; Director: Villeneuve",
        "Movie Name: Emma; Director: de Wilde",
        "Movie Name: Heat; Director: Mann",
        "Movie Name: Alien; Director: Scott",
    ];

    #[test]
    fn builds_one_row_per_doc() {
        let idx = index(&TEXTS);
        assert_eq!(idx.len(), 8);
        assert_eq!(idx.rows.len(), 8 * 256);
        let again = index(&TEXTS);
        assert_eq!(idx.rows, again.rows);
    }

    #[test]
    fn self_match_ranks_first() {
        let idx = index(&TEXTS);
        let hits = idx.search(TEXTS[4], 3).unwrap();
        assert_eq!(hits[0].doc_id, 4);
        assert!((hits[0].score - 1.0).abs() < 1e-6);
        assert_eq!(idx.retrieve(TEXTS[4]), TEXTS[4]);
        assert_eq!(idx.retrieve("Dune Villeneuve"), idx.retrieve("Dune Villeneuve"));
    }

    #[test]
    fn duplicate_texts_tie_break_by_id() {
        let idx = index(&["alpha beta", "gamma", "alpha beta"]);
        let hits = idx.search("alpha beta", 2).unwrap();
        assert_eq!((hits[0].doc_id, hits[1].doc_id), (0, 2));
    }

    #[test]
    fn k_beyond_corpus_returns_everything() {
        let idx = index(&TEXTS);
        assert_eq!(idx.search("Nolan", 100).unwrap().len(), 8);
        assert!(idx.search("Nolan", 0).unwrap().is_empty());
    }

    #[test]
    fn empty_index() {
        let idx = index(&[]);
        assert!(idx.search("anything", 5).unwrap().is_empty());
        assert_eq!(idx.retrieve("anything"), BLANK_PLACEHOLDER);
    }

    #[test]
    fn rejects_sparse_ids() {
        let mut d = docs(&["a", "b"]);
        d[1].doc_id = 5;
        assert!(matches!(
            FlatIndex::build(d, Arc::new(HashEmbedder::default())),
            Err(IndexError::NonDenseIds { .. })
        ));
    }

    #[test]
    fn save_load_and_digest_guard() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.bin");
        let idx = index(&TEXTS);
        idx.save(&path).unwrap();
        let loaded = FlatIndex::load(&path, docs(&TEXTS), Arc::new(HashEmbedder::default())).unwrap();
        assert_eq!(loaded.rows, idx.rows);
        assert_eq!(loaded.corpus_digest(), idx.corpus_digest());

        let mut other = TEXTS;
        other[0] = "something else";
        let err = FlatIndex::load(&path, docs(&other), Arc::new(HashEmbedder::default())).unwrap_err();
        assert!(matches!(err, IndexError::DigestMismatch { .. }));
    }

    proptest! {
        #[test]
        fn search_prefix_property(words in prop::collection::vec("[a-e]{2,5}( [a-e]{2,5}){0,3}", 1..30),
                                  q in "[a-e]{2,5}( [a-e]{2,5}){0,2}",
                                  k in 1usize..10) {
            let texts: Vec<&str> = words.iter().map(String::as_str).collect();
            let idx = index(&texts);
            let a = idx.search(&q, k).unwrap();
            let b = idx.search(&q, k + 1).unwrap();
            prop_assert_eq!(&b[..a.len()], &a[..]);
            prop_assert_eq!(a.len(), k.min(texts.len()));
            prop_assert_eq!(idx.retrieve(&q), a[0].text.clone());
        }
    }
}
