//! Interaction logs, the item catalog and evaluation splits.

mod ingest;
mod split;
pub mod synthetic;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ingest::{ingest_interactions, read_catalog, read_interactions, Ingested, SourceFormat};
pub(crate) use split::sha256_hex;
pub use split::{
    split_and_subsample, NextItemExample, SplitBundle, SplitConfig, SplitCounts, SplitManifest,
};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("row {row}: {message}")]
    Ingestion { row: usize, message: String },
    #[error("item {item_id} has conflicting titles {first:?} and {second:?}")]
    CatalogConflict {
        item_id: String,
        first: String,
        second: String,
    },
    #[error("{split} split needs {requested} examples but only {available} are available")]
    Sizing {
        split: &'static str,
        requested: usize,
        available: usize,
    },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed split file {path}: {message}")]
    Format { path: String, message: String },
}

/// One user-item event.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub user_id: String,
    pub item_id: String,
    pub timestamp: i64,
}

impl InteractionRecord {
    pub fn new(user_id: impl Into<String>, item_id: impl Into<String>, timestamp: i64) -> Self {
        Self {
            user_id: user_id.into(),
            item_id: item_id.into(),
            timestamp,
        }
    }
}

/// A user's events in non-decreasing timestamp order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserHistory {
    pub user_id: String,
    pub events: Vec<InteractionRecord>,
}

impl UserHistory {
    /// Builds a history from events of one user, stable-sorting by timestamp so
    /// ties keep their input order.
    pub fn from_events(user_id: impl Into<String>, mut events: Vec<InteractionRecord>) -> Self {
        events.sort_by_key(|e| e.timestamp);
        Self {
            user_id: user_id.into(),
            events,
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn item_ids(&self) -> impl Iterator<Item = &str> {
        self.events.iter().map(|e| e.item_id.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub item_id: String,
    pub title: String,
    /// Ordered `(field, value)` pairs; field names are unique per item.
    pub metadata: Vec<(String, String)>,
}

impl ItemRecord {
    pub fn new(item_id: impl Into<String>, title: impl Into<String>) -> Self {
        Self {
            item_id: item_id.into(),
            title: title.into(),
            metadata: Vec::new(),
        }
    }

    /// Adds or replaces a metadata field.
    pub fn with_field(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        let key = key.into();
        let value = value.into();
        match self.metadata.iter_mut().find(|(k, _)| *k == key) {
            Some(slot) => slot.1 = value,
            None => self.metadata.push((key, value)),
        }
        self
    }

    pub fn field(&self, key: &str) -> Option<&str> {
        self.metadata
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

/// Items keyed and iterated by `item_id` ascending.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemCatalog {
    items: BTreeMap<String, ItemRecord>,
}

impl ItemCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts an item. A second record for the same id is accepted only when the
    /// titles agree; the first record wins.
    pub fn insert(&mut self, item: ItemRecord) -> Result<(), DatasetError> {
        if let Some(existing) = self.items.get(&item.item_id) {
            if existing.title != item.title {
                return Err(DatasetError::CatalogConflict {
                    item_id: item.item_id,
                    first: existing.title.clone(),
                    second: item.title,
                });
            }
            return Ok(());
        }
        self.items.insert(item.item_id.clone(), item);
        Ok(())
    }

    pub fn get(&self, item_id: &str) -> Option<&ItemRecord> {
        self.items.get(item_id)
    }

    pub fn contains(&self, item_id: &str) -> bool {
        self.items.contains_key(item_id)
    }

    pub fn title(&self, item_id: &str) -> Option<&str> {
        self.items.get(item_id).map(|i| i.title.as_str())
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ItemRecord> {
        self.items.values()
    }

    /// Titles for a sequence of item ids, skipping ids missing from the catalog.
    pub fn titles_for<'a>(&'a self, ids: impl IntoIterator<Item = &'a str>) -> Vec<String> {
        ids.into_iter()
            .filter_map(|id| self.title(id).map(str::to_string))
            .collect()
    }
}

impl FromIterator<ItemRecord> for ItemCatalog {
    /// Collects items, keeping the first record of any repeated id.
    fn from_iter<T: IntoIterator<Item = ItemRecord>>(iter: T) -> Self {
        let mut items = BTreeMap::new();
        for item in iter {
            items.entry(item.item_id.clone()).or_insert(item);
        }
        Self { items }
    }
}

/// Drops users with fewer than `min_events` interactions, preserving user order.
pub fn filter_min_history(histories: Vec<UserHistory>, min_events: usize) -> Vec<UserHistory> {
    histories
        .into_iter()
        .filter(|h| h.len() >= min_events)
        .collect()
}

/// Interaction counts per item over the given histories.
pub fn item_frequency(histories: &[UserHistory]) -> HashMap<String, usize> {
    let mut counts = HashMap::new();
    for h in histories {
        for e in &h.events {
            *counts.entry(e.item_id.clone()).or_insert(0) += 1;
        }
    }
    counts
}

/// Keeps the examples whose target sits in the rarest `quantile` of the distinct
/// target items, ranking items by frequency ascending and then by id ascending.
/// Items absent from `frequency` count as zero.
pub fn long_tail_slice(
    test_examples: &[NextItemExample],
    frequency: &HashMap<String, usize>,
    quantile: f64,
) -> Result<Vec<NextItemExample>, DatasetError> {
    if !(quantile > 0.0 && quantile <= 1.0) {
        return Err(DatasetError::Argument(format!(
            "quantile must lie in (0, 1], got {quantile}"
        )));
    }
    let mut targets: Vec<&str> = test_examples
        .iter()
        .map(|e| e.target.item_id.as_str())
        .collect();
    targets.sort_unstable();
    targets.dedup();
    targets.sort_by_key(|id| (frequency.get(*id).copied().unwrap_or(0), *id));

    // ceil with a little slack so 0.2 * 10 keeps exactly two items
    let keep = ((quantile * targets.len() as f64) - 1e-9).ceil().max(0.0) as usize;
    let tail: std::collections::HashSet<&str> = targets.into_iter().take(keep).collect();
    Ok(test_examples
        .iter()
        .filter(|e| tail.contains(e.target.item_id.as_str()))
        .cloned()
        .collect())
}
