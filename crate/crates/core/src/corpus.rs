//! Collaborative-history and item-metadata documents.
//!
//! Collaborative documents read `User <id> History: [<title>, <title>, ...]` and
//! meta documents read `<Entity Label>: <title>; <Field>: <value>; ...`.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{ItemCatalog, ItemRecord, SplitBundle};
use crate::profile::{AblationFlags, DatasetProfile, MetaField};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot render a collaborative document for user {0} with no titles")]
    EmptyHistory(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed corpus file {path}: {message}")]
    Format { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DocKind {
    Collaborative,
    Meta,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryDocument {
    /// Dense from zero; equals the document's row in the index.
    pub doc_id: usize,
    pub kind: DocKind,
    /// User id for collaborative documents, item id for meta documents.
    pub source_ref: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusConfig {
    /// Keep only the most recent titles of each collaborative history.
    pub max_history_titles: usize,
    /// Skip memory users who also own a split example.
    pub exclude_example_users: bool,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            max_history_titles: 50,
            exclude_example_users: true,
        }
    }
}

pub fn render_collab_doc(user_id: &str, history_titles: &[String]) -> Result<String, CorpusError> {
    if history_titles.is_empty() {
        return Err(CorpusError::EmptyHistory(user_id.to_string()));
    }
    Ok(format!("User {user_id} History: [{}]", history_titles.join(", ")))
}

/// Renders a meta document; fields the item lacks are omitted.
pub fn render_meta_doc(item: &ItemRecord, entity_label: &str, fields: &[MetaField]) -> String {
    let mut out = format!("{entity_label}: {}", item.title);
    for field in fields {
        if let Some(value) = item.field(&field.key) {
            if value.trim().is_empty() {
                continue;
            }
            out.push_str("; ");
            out.push_str(&field.label);
            out.push_str(": ");
            out.push_str(value);
        }
    }
    out
}

/// Assembles the corpus: collaborative documents first, then meta documents, each
/// ascending by source reference.
pub fn build_corpus(
    bundle: &SplitBundle,
    catalog: &ItemCatalog,
    profile: &DatasetProfile,
    ablation: AblationFlags,
    config: &CorpusConfig,
) -> Vec<MemoryDocument> {
    let mut docs = Vec::new();
    if !ablation.without_cf {
        let excluded: HashSet<&str> = if config.exclude_example_users {
            bundle.example_users()
        } else {
            HashSet::new()
        };
        // memory pool keeps per-user chronological order
        let mut per_user: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for r in &bundle.memory_pool {
            if excluded.contains(r.user_id.as_str()) {
                continue;
            }
            per_user.entry(r.user_id.as_str()).or_default().push(r.item_id.as_str());
        }
        for (user, items) in per_user {
            let titles = catalog.titles_for(items.iter().copied());
            let start = titles.len().saturating_sub(config.max_history_titles.max(1));
            if let Ok(text) = render_collab_doc(user, &titles[start..]) {
                docs.push(MemoryDocument {
                    doc_id: docs.len(),
                    kind: DocKind::Collaborative,
                    source_ref: user.to_string(),
                    text,
                });
            }
        }
    }
    if !ablation.without_meta {
        for item in catalog.iter() {
            docs.push(MemoryDocument {
                doc_id: docs.len(),
                kind: DocKind::Meta,
                source_ref: item.item_id.clone(),
                text: render_meta_doc(item, &profile.entity_label, &profile.meta_fields),
            });
        }
    }
    if docs.is_empty() {
        log::warn!("corpus is empty (ablation: {})", ablation.label());
    }
    docs
}

/// Corpus encoded one JSON document per line, in `doc_id` order.
pub fn encode_corpus(docs: &[MemoryDocument]) -> String {
    let mut out = String::new();
    for d in docs {
        out.push_str(&serde_json::to_string(d).expect("documents serialize"));
        out.push('\n');
    }
    out
}

/// SHA-256 of [`encode_corpus`]; indexes record it to refuse foreign corpora.
pub fn corpus_digest(docs: &[MemoryDocument]) -> String {
    crate::dataset::sha256_hex(encode_corpus(docs).as_bytes())
}

pub fn write_corpus(path: &Path, docs: &[MemoryDocument]) -> Result<(), CorpusError> {
    let mut f = fs::File::create(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    f.write_all(encode_corpus(docs).as_bytes())
        .map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })
}

pub fn read_corpus(path: &Path) -> Result<Vec<MemoryDocument>, CorpusError> {
    let io = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = fs::File::open(path).map_err(io)?;
    let mut docs: Vec<MemoryDocument> = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: MemoryDocument = serde_json::from_str(&line).map_err(|e| CorpusError::Format {
            path: path.display().to_string(),
            message: format!("line {}: {e}", n + 1),
        })?;
        if doc.doc_id != docs.len() {
            return Err(CorpusError::Format {
                path: path.display().to_string(),
                message: format!("doc_id {} out of order at line {}", doc.doc_id, n + 1),
            });
        }
        docs.push(doc);
    }
    Ok(docs)
}
