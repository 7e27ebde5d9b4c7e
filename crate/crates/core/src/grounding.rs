//! Grounding free-text answers onto the catalog and scoring them.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::ItemCatalog;
use crate::embedding::{dot, Embedder, EmbeddingError, Vector};
use crate::index::top_k;

#[derive(Debug, Error)]
pub enum GroundingError {
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("cannot ground against an empty catalog")]
    EmptyCatalog,
    #[error("invalid reward config: {0}")]
    Config(String),
}

/// Embedded catalog titles, in ascending `item_id` order.
pub struct TitleIndex {
    item_ids: Vec<String>,
    vectors: Vec<Vector>,
    embedder: Arc<dyn Embedder>,
}

impl std::fmt::Debug for TitleIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TitleIndex").field("items", &self.item_ids.len()).finish()
    }
}

impl TitleIndex {
    pub fn build(catalog: &ItemCatalog, embedder: Arc<dyn Embedder>) -> Result<Self, GroundingError> {
        if catalog.is_empty() {
            return Err(GroundingError::EmptyCatalog);
        }
        let item_ids: Vec<String> = catalog.iter().map(|i| i.item_id.clone()).collect();
        let titles: Vec<&str> = catalog.iter().map(|i| i.title.as_str()).collect();
        let vectors = embedder.embed_batch(&titles)?;
        Ok(Self {
            item_ids,
            vectors,
            embedder,
        })
    }

    /// Uses precomputed title vectors; they are re-normalized on the way in.
    pub fn from_vectors(
        entries: Vec<(String, Vec<f64>)>,
        embedder: Arc<dyn Embedder>,
    ) -> Result<Self, GroundingError> {
        if entries.is_empty() {
            return Err(GroundingError::EmptyCatalog);
        }
        let mut entries = entries;
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        let mut item_ids = Vec::with_capacity(entries.len());
        let mut vectors = Vec::with_capacity(entries.len());
        for (id, v) in entries {
            item_ids.push(id);
            vectors.push(Vector::from_raw(v)?);
        }
        Ok(Self {
            item_ids,
            vectors,
            embedder,
        })
    }

    pub fn len(&self) -> usize {
        self.item_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.item_ids.is_empty()
    }

    /// Restricts grounding to `keep`, e.g. the items of one split.
    pub fn restricted_to(&self, keep: &std::collections::BTreeSet<String>) -> Result<Self, GroundingError> {
        let (item_ids, vectors): (Vec<_>, Vec<_>) = self
            .item_ids
            .iter()
            .zip(&self.vectors)
            .filter(|(id, _)| keep.contains(*id))
            .map(|(id, v)| (id.clone(), v.clone()))
            .unzip();
        if item_ids.is_empty() {
            return Err(GroundingError::EmptyCatalog);
        }
        Ok(Self {
            item_ids,
            vectors,
            embedder: Arc::clone(&self.embedder),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub item_id: String,
    pub score: f64,
}

/// Ranked grounding output; scores never increase down the list.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CandidateList {
    pub items: Vec<Candidate>,
}

impl CandidateList {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// 1-based rank of `item_id`.
    pub fn rank_of(&self, item_id: &str) -> Option<usize> {
        self.items.iter().position(|c| c.item_id == item_id).map(|p| p + 1)
    }
}

/// Removes double quotes the policy wraps around titles.
pub fn strip_quotes(answer: &str) -> String {
    answer
        .chars()
        .filter(|c| !matches!(c, '"' | '\u{201c}' | '\u{201d}'))
        .collect::<String>()
        .trim()
        .to_string()
}

/// Top `n` catalog items by cosine similarity between the answer and each title,
/// ties by ascending item id. A missing answer grounds to the empty list.
pub fn ground(answer: Option<&str>, titles: &TitleIndex, n: usize) -> Result<CandidateList, GroundingError> {
    let Some(answer) = answer else {
        return Ok(CandidateList::default());
    };
    let query = titles.embedder.embed(&strip_quotes(answer))?;
    Ok(ground_vector(&query, titles, n))
}

pub fn ground_vector(query: &Vector, titles: &TitleIndex, n: usize) -> CandidateList {
    let scored: Vec<(f64, usize)> = titles
        .vectors
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let s = if query.is_empty() || v.is_empty() {
                0.0
            } else {
                dot(query.values(), v.values()).clamp(-1.0, 1.0)
            };
            (s, k)
        })
        .collect();
    CandidateList {
        items: top_k(scored, n)
            .into_iter()
            .map(|(score, k)| Candidate {
                item_id: titles.item_ids[k].clone(),
                score,
            })
            .collect(),
    }
}

/// Cutoffs, their weights and the parse penalty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub cutoffs: Vec<usize>,
    pub weights: Vec<f64>,
    pub lambda: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            cutoffs: vec![1, 5, 10, 50, 100],
            weights: vec![0.5, 0.3, 0.1, 0.08, 0.02],
            lambda: 1.0,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), GroundingError> {
        if self.cutoffs.is_empty() || self.cutoffs.len() != self.weights.len() {
            return Err(GroundingError::Config(
                "cutoffs and weights must be non-empty and of equal length".into(),
            ));
        }
        if self.cutoffs[0] == 0 || self.cutoffs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(GroundingError::Config("cutoffs must be positive and strictly increasing".into()));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(GroundingError::Config("weights must be positive".into()));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(GroundingError::Config("lambda must be non-negative".into()));
        }
        Ok(())
    }

    pub fn max_cutoff(&self) -> usize {
        self.cutoffs.last().copied().unwrap_or(0)
    }

    pub fn max_accuracy(&self) -> f64 {
        self.weights.iter().rev().sum()
    }

    /// Accuracy earned by truth at `rank`: the weights of every cutoff the rank
    /// falls within, summed from the widest cutoff inward.
    pub fn accuracy_at(&self, rank: Option<usize>) -> f64 {
        let Some(rank) = rank else { return 0.0 };
        self.cutoffs
            .iter()
            .zip(&self.weights)
            .rev()
            .filter(|(n, _)| rank <= **n)
            .map(|(_, w)| *w)
            .fold(0.0, |acc, w| acc + w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub accuracy_term: f64,
    /// `0` when the answer parsed, `-lambda` otherwise.
    pub parse_term: f64,
    pub total: f64,
    pub rank_of_truth: Option<usize>,
}

pub fn reward(candidates: &CandidateList, gt_item: &str, parse_ok: bool, config: &RewardConfig) -> RewardBreakdown {
    let rank_of_truth = candidates.rank_of(gt_item);
    let accuracy_term = config.accuracy_at(rank_of_truth);
    let parse_term = if parse_ok { 0.0 } else { -config.lambda };
    RewardBreakdown {
        accuracy_term,
        parse_term,
        total: accuracy_term + parse_term,
        rank_of_truth,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ItemRecord;
    use crate::embedding::HashEmbedder;
    use proptest::prelude::*;

    fn list(ids: &[&str]) -> CandidateList {
        CandidateList {
            items: ids
                .iter()
                .enumerate()
                .map(|(k, id)| Candidate {
                    item_id: id.to_string(),
                    score: 1.0 - k as f64 * 0.01,
                })
                .collect(),
        }
    }

    fn ranked_with_truth_at(rank: usize) -> CandidateList {
        let ids: Vec<String> = (1..=100)
            .map(|k| if k == rank { "gt".to_string() } else { format!("x{k}") })
            .collect();
        list(&ids.iter().map(String::as_str).collect::<Vec<_>>())
    }

    #[test]
    fn reward_examples() {
        let cfg = RewardConfig::default();
        let r1 = reward(&ranked_with_truth_at(1), "gt", true, &cfg);
        assert_eq!(r1.accuracy_term, 1.0);
        assert_eq!(r1.total, 1.0);
        let r7 = reward(&ranked_with_truth_at(7), "gt", true, &cfg);
        assert_eq!(r7.accuracy_term, 0.2);
        let fail = reward(&CandidateList::default(), "gt", false, &cfg);
        assert_eq!(fail.total, -1.0);
        assert_eq!(fail.rank_of_truth, None);
    }

    #[test]
    fn accuracy_bands_are_exact() {
        let cfg = RewardConfig::default();
        let expect = [(1, 1.0), (2, 0.5), (5, 0.5), (6, 0.2), (10, 0.2), (11, 0.1), (50, 0.1), (51, 0.02), (100, 0.02), (101, 0.0)];
        for (rank, value) in expect {
            assert_eq!(cfg.accuracy_at(Some(rank)), value, "rank {rank}");
        }
        assert_eq!(cfg.accuracy_at(None), 0.0);
        assert_eq!(cfg.max_accuracy(), 1.0);
    }

    #[test]
    fn config_validation() {
        assert!(RewardConfig::default().validate().is_ok());
        let bad = RewardConfig { cutoffs: vec![5, 1], weights: vec![0.5, 0.5], lambda: 1.0 };
        assert!(bad.validate().is_err());
        let bad = RewardConfig { cutoffs: vec![1], weights: vec![0.5, 0.5], lambda: 1.0 };
        assert!(bad.validate().is_err());
        let bad = RewardConfig { cutoffs: vec![1], weights: vec![-0.5], lambda: 1.0 };
        assert!(bad.validate().is_err());
    }

    fn catalog() -> ItemCatalog {
        ["The Midnight Library", "A Monster Calls", "Dune", "Emma", "The Incredibles"]
            .iter()
            .enumerate()
            .map(|(k, t)| ItemRecord::new(format!("i{k}"), *t))
            .collect()
    }

    #[test]
    fn exact_title_grounds_first() {
        let titles = TitleIndex::build(&catalog(), Arc::new(HashEmbedder::default())).unwrap();
        let c = ground(Some("\"The Incredibles\""), &titles, 100).unwrap();
        assert_eq!(c.items[0].item_id, "i4");
        assert_eq!(c.len(), 5);
        assert!(c.items.windows(2).all(|w| w[0].score >= w[1].score));
        assert!(ground(None, &titles, 100).unwrap().is_empty());
        assert_eq!(ground(Some("Dune"), &titles, 2).unwrap().len(), 2);
    }

    #[test]
    fn empty_catalog_rejected() {
        assert!(matches!(
            TitleIndex::build(&ItemCatalog::new(), Arc::new(HashEmbedder::default())),
            Err(GroundingError::EmptyCatalog)
        ));
    }

    #[test]
    fn restricted_pool() {
        let titles = TitleIndex::build(&catalog(), Arc::new(HashEmbedder::default())).unwrap();
        let keep: std::collections::BTreeSet<String> = ["i2".to_string(), "i3".to_string()].into();
        let small = titles.restricted_to(&keep).unwrap();
        let c = ground(Some("The Incredibles"), &small, 100).unwrap();
        assert_eq!(c.len(), 2);
        assert!(titles.restricted_to(&Default::default()).is_err());
    }

    proptest! {
        #[test]
        fn reward_monotone_in_rank(a in 1usize..150, b in 1usize..150) {
            let cfg = RewardConfig::default();
            let (lo, hi) = (a.min(b), a.max(b));
            prop_assert!(cfg.accuracy_at(Some(lo)) >= cfg.accuracy_at(Some(hi)));
            prop_assert!(cfg.accuracy_at(Some(hi)) >= cfg.accuracy_at(None));
            let allowed = [0.0, 0.02, 0.1, 0.2, 0.5, 1.0];
            prop_assert!(allowed.contains(&cfg.accuracy_at(Some(a))));
        }

        #[test]
        fn grounding_scale_invariant(
            rows in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 4), 1..20),
            query in prop::collection::vec(-1.0f64..1.0, 4),
            scale in 0.01f64..100.0,
        ) {
            let entries: Vec<(String, Vec<f64>)> = rows.iter().enumerate().map(|(k, r)| (format!("i{k:02}"), r.clone())).collect();
            let scaled: Vec<(String, Vec<f64>)> = entries.iter().map(|(id, r)| (id.clone(), r.iter().map(|x| x * scale).collect())).collect();
            let emb: Arc<dyn Embedder> = Arc::new(HashEmbedder::new(4));
            let a = TitleIndex::from_vectors(entries, Arc::clone(&emb)).unwrap();
            let b = TitleIndex::from_vectors(scaled, emb).unwrap();
            let q = Vector::from_raw(query).unwrap();
            let ca = ground_vector(&q, &a, 100);
            let cb = ground_vector(&q, &b, 100);
            let ids_a: Vec<_> = ca.items.iter().map(|c| &c.item_id).collect();
            let ids_b: Vec<_> = cb.items.iter().map(|c| &c.item_id).collect();
            prop_assert_eq!(ids_a, ids_b);
        }
    }

    #[test]
    fn strip_quotes_variants() {
        assert_eq!(strip_quotes(" \"Meddle\" "), "Meddle");
        assert_eq!(strip_quotes("\u{201c}Meddle\u{201d}"), "Meddle");
    }
}
