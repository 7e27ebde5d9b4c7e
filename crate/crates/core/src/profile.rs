//! Dataset profiles and ablation switches.
//!
//! A profile carries every dataset-specific string used when rendering documents
//! and prompts, so the rest of the pipeline never hard-codes "movie" or "book".

use serde::{Deserialize, Serialize};

/// One metadata column surfaced in meta documents and prompts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaField {
    /// Column name in the catalog source.
    pub key: String,
    /// Label rendered in documents and prompts.
    pub label: String,
}

impl MetaField {
    pub fn new(key: impl Into<String>, label: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            label: label.into(),
        }
    }

    /// A field whose catalog key is already the display label.
    pub fn same(label: impl Into<String>) -> Self {
        let label = label.into();
        Self {
            key: label.clone(),
            label,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetProfile {
    pub name: String,
    /// Leading label of a meta document, e.g. `Movie Name`.
    pub entity_label: String,
    pub item_singular: String,
    pub item_plural: String,
    /// Past-tense verb phrase used in the prompt, e.g. `watched`.
    pub consumed_verb: String,
    /// Noun describing the history, e.g. `viewing`.
    pub history_kind: String,
    /// Metadata columns in rendering order.
    pub meta_fields: Vec<MetaField>,
    /// Title used in the prompt's answer-format example.
    pub example_title: String,
}

impl DatasetProfile {
    pub fn movielens() -> Self {
        Self {
            name: "movielens".into(),
            entity_label: "Movie Name".into(),
            item_singular: "movie".into(),
            item_plural: "movies".into(),
            consumed_verb: "watched".into(),
            history_kind: "viewing".into(),
            meta_fields: vec![
                MetaField::new("director", "Director"),
                MetaField::new("all_genres", "All Genres"),
                MetaField::new("main_genre", "Main Genre"),
            ],
            example_title: "The Incredibles".into(),
        }
    }

    pub fn goodreads() -> Self {
        Self {
            name: "goodreads".into(),
            entity_label: "Book Name".into(),
            item_singular: "book".into(),
            item_plural: "books".into(),
            consumed_verb: "read".into(),
            history_kind: "reading".into(),
            meta_fields: vec![
                MetaField::new("author", "Author"),
                MetaField::new("genres", "Genres"),
                MetaField::new("series", "Series"),
            ],
            example_title: "A Monster Calls".into(),
        }
    }

    pub fn cds_vinyl() -> Self {
        Self {
            name: "cds".into(),
            entity_label: "Album Name".into(),
            item_singular: "album".into(),
            item_plural: "albums".into(),
            consumed_verb: "listened to".into(),
            history_kind: "listening".into(),
            meta_fields: vec![
                MetaField::new("price", "Price"),
                MetaField::new("salesRank", "Sales Rank"),
                MetaField::new("brand", "Brand"),
                MetaField::new("categories", "Categories"),
            ],
            example_title: "Wish You Were Here".into(),
        }
    }

    /// Looks up one of the built-in profiles by name.
    pub fn by_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "movielens" | "ml" | "movies" => Some(Self::movielens()),
            "goodreads" | "books" => Some(Self::goodreads()),
            "cds" | "cds_vinyl" | "cds-vinyl" | "amazon-cds" => Some(Self::cds_vinyl()),
            _ => None,
        }
    }

    /// `Author, Genres, Series` style list of metadata labels.
    pub fn meta_label_list(&self) -> String {
        self.meta_fields
            .iter()
            .map(|f| f.label.as_str())
            .collect::<Vec<_>>()
            .join(", ")
    }
}

/// Component ablations. Each flag is independent of the others.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AblationFlags {
    /// Drop collaborative-history documents and their prompt description.
    pub without_cf: bool,
    /// Drop item-metadata documents and their prompt description.
    pub without_meta: bool,
    /// Drop the explicit reasoning instruction from the prompt.
    pub without_re: bool,
}

impl AblationFlags {
    pub const NONE: AblationFlags = AblationFlags {
        without_cf: false,
        without_meta: false,
        without_re: false,
    };

    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.without_cf {
            parts.push("w/o CF");
        }
        if self.without_meta {
            parts.push("w/o META");
        }
        if self.without_re {
            parts.push("w/o RE");
        }
        if parts.is_empty() {
            "full".to_string()
        } else {
            parts.join(" + ")
        }
    }
}
