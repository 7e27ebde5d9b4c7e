use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde_json::Value;

use super::{DatasetError, InteractionRecord, ItemCatalog, ItemRecord, UserHistory};

/// On-disk layout of a record source.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceFormat {
    Csv,
    Tsv,
    JsonLines,
}

impl SourceFormat {
    /// `.jsonl`, `.ndjson` and `.json` are line-delimited JSON, `.tsv` is
    /// tab-separated and anything else is comma-separated with a header row.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase) {
            Some(ext) if ext == "jsonl" || ext == "ndjson" || ext == "json" => Self::JsonLines,
            Some(ext) if ext == "tsv" => Self::Tsv,
            _ => Self::Csv,
        }
    }

    fn delimiter(self) -> u8 {
        match self {
            Self::Tsv => b'\t',
            _ => b',',
        }
    }
}

/// Result of [`ingest_interactions`].
#[derive(Debug, Clone, Default)]
pub struct Ingested {
    /// Per-user histories in order of each user's first appearance.
    pub histories: Vec<UserHistory>,
    pub catalog: ItemCatalog,
    /// Interaction rows dropped because their item is not in the catalog.
    pub dropped_unknown_items: usize,
}

fn io_err(path: &Path, source: std::io::Error) -> DatasetError {
    DatasetError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn row_err(row: usize, message: impl Into<String>) -> DatasetError {
    DatasetError::Ingestion {
        row,
        message: message.into(),
    }
}

fn parse_timestamp(raw: &str, row: usize) -> Result<i64, DatasetError> {
    let raw = raw.trim();
    if let Ok(v) = raw.parse::<i64>() {
        return Ok(v);
    }
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v.floor() as i64),
        _ => Err(row_err(row, format!("timestamp {raw:?} is not a number"))),
    }
}

/// Reads `(user_id, item_id, timestamp)` rows from a file.
pub fn read_interactions(path: &Path) -> Result<Vec<InteractionRecord>, DatasetError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    read_interactions_from(file, SourceFormat::from_path(path))
}

/// Reads interaction rows from any reader. Row numbers in errors are 1-based and
/// count data rows only.
pub fn read_interactions_from(
    reader: impl Read,
    format: SourceFormat,
) -> Result<Vec<InteractionRecord>, DatasetError> {
    match format {
        SourceFormat::JsonLines => {
            let mut out = Vec::new();
            for (row, value) in json_lines(reader)? {
                let get = |key: &str| -> Result<String, DatasetError> {
                    match value.get(key) {
                        Some(Value::String(s)) => Ok(s.clone()),
                        Some(Value::Number(n)) => Ok(n.to_string()),
                        _ => Err(row_err(row, format!("missing field {key}"))),
                    }
                };
                let timestamp = parse_timestamp(&get("timestamp")?, row)?;
                out.push(InteractionRecord::new(get("user_id")?, get("item_id")?, timestamp));
            }
            Ok(out)
        }
        SourceFormat::Csv | SourceFormat::Tsv => {
            let mut rdr = csv::ReaderBuilder::new()
                .delimiter(format.delimiter())
                .from_reader(reader);
            let headers = rdr.headers().map_err(|e| row_err(0, e.to_string()))?.clone();
            let col = |name: &str| -> Result<usize, DatasetError> {
                headers
                    .iter()
                    .position(|h| h.trim() == name)
                    .ok_or_else(|| row_err(0, format!("missing column {name}")))
            };
            let (u, i, t) = (col("user_id")?, col("item_id")?, col("timestamp")?);
            let mut out = Vec::new();
            for (idx, record) in rdr.records().enumerate() {
                let row = idx + 1;
                let record = record.map_err(|e| row_err(row, e.to_string()))?;
                let field = |k: usize| record.get(k).map(str::trim).unwrap_or("");
                let timestamp = parse_timestamp(field(t), row)?;
                out.push(InteractionRecord::new(field(u), field(i), timestamp));
            }
            Ok(out)
        }
    }
}

/// Reads catalog rows (`item_id`, `title`, then metadata columns) from a file.
pub fn read_catalog(path: &Path) -> Result<Vec<ItemRecord>, DatasetError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    read_catalog_from(file, SourceFormat::from_path(path))
}

/// Catalog reader. In JSON lines every key other than `item_id` and `title` is
/// metadata (a nested `metadata` object is flattened in); arrays are joined with
/// `", "`. In delimited files a `|` inside a metadata value separates list entries.
pub fn read_catalog_from(
    reader: impl Read,
    format: SourceFormat,
) -> Result<Vec<ItemRecord>, DatasetError> {
    match format {
        SourceFormat::JsonLines => {
            let mut out = Vec::new();
            for (row, value) in json_lines(reader)? {
                let Value::Object(map) = value else {
                    return Err(row_err(row, "catalog row is not an object"));
                };
                let text = |key: &str| match map.get(key) {
                    Some(Value::String(s)) => Some(s.clone()),
                    Some(Value::Number(n)) => Some(n.to_string()),
                    _ => None,
                };
                let item_id = text("item_id").ok_or_else(|| row_err(row, "missing item_id"))?;
                let title = text("title").ok_or_else(|| row_err(row, "missing title"))?;
                let mut item = ItemRecord::new(item_id, title);
                for (key, value) in &map {
                    match key.as_str() {
                        "item_id" | "title" => {}
                        "metadata" => {
                            if let Value::Object(inner) = value {
                                for (k, v) in inner {
                                    if let Some(v) = json_field_text(v) {
                                        item = item.with_field(k.clone(), v);
                                    }
                                }
                            }
                        }
                        _ => {
                            if let Some(v) = json_field_text(value) {
                                item = item.with_field(key.clone(), v);
                            }
                        }
                    }
                }
                out.push(item);
            }
            Ok(out)
        }
        SourceFormat::Csv | SourceFormat::Tsv => {
            let mut rdr = csv::ReaderBuilder::new()
                .delimiter(format.delimiter())
                .from_reader(reader);
            let headers = rdr.headers().map_err(|e| row_err(0, e.to_string()))?.clone();
            let find = |name: &str| headers.iter().position(|h| h.trim() == name);
            let id_col = find("item_id").ok_or_else(|| row_err(0, "missing column item_id"))?;
            let title_col = find("title").ok_or_else(|| row_err(0, "missing column title"))?;
            let mut out = Vec::new();
            for (idx, record) in rdr.records().enumerate() {
                let row = idx + 1;
                let record = record.map_err(|e| row_err(row, e.to_string()))?;
                let get = |k: usize| record.get(k).map(str::trim).unwrap_or("");
                let mut item = ItemRecord::new(get(id_col), get(title_col));
                for (k, name) in headers.iter().enumerate() {
                    if k == id_col || k == title_col {
                        continue;
                    }
                    let value = get(k);
                    if value.is_empty() {
                        continue;
                    }
                    let value = value
                        .split('|')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .collect::<Vec<_>>()
                        .join(", ");
                    item = item.with_field(name.trim(), value);
                }
                out.push(item);
            }
            Ok(out)
        }
    }
}

fn json_field_text(value: &Value) -> Option<String> {
    match value {
        Value::String(s) if !s.trim().is_empty() => Some(s.trim().to_string()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Array(items) => {
            let parts: Vec<String> = items.iter().filter_map(json_field_text).collect();
            (!parts.is_empty()).then(|| parts.join(", "))
        }
        _ => None,
    }
}

fn json_lines(reader: impl Read) -> Result<Vec<(usize, Value)>, DatasetError> {
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let row = idx + 1;
        let line = line.map_err(|e| row_err(row, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| row_err(row, e.to_string()))?;
        out.push((row, value));
    }
    Ok(out)
}

/// Groups interactions into per-user histories against a catalog.
///
/// Rows whose item is missing from the catalog are dropped and counted. Users keep
/// the order of their first row; within a user, events are stable-sorted by time.
pub fn ingest_interactions(
    interactions: impl IntoIterator<Item = InteractionRecord>,
    catalog_rows: impl IntoIterator<Item = ItemRecord>,
) -> Result<Ingested, DatasetError> {
    let mut catalog = ItemCatalog::new();
    for (idx, item) in catalog_rows.into_iter().enumerate() {
        if item.item_id.trim().is_empty() {
            return Err(row_err(idx + 1, "catalog row has an empty item_id"));
        }
        if item.title.trim().is_empty() {
            return Err(row_err(idx + 1, format!("item {} has an empty title", item.item_id)));
        }
        catalog.insert(item)?;
    }

    let mut slot: HashMap<String, usize> = HashMap::new();
    let mut grouped: Vec<(String, Vec<InteractionRecord>)> = Vec::new();
    let mut dropped = 0usize;
    for (idx, record) in interactions.into_iter().enumerate() {
        if record.user_id.is_empty() || record.item_id.is_empty() {
            return Err(row_err(idx + 1, "empty user_id or item_id"));
        }
        if !catalog.contains(&record.item_id) {
            dropped += 1;
            continue;
        }
        let k = *slot.entry(record.user_id.clone()).or_insert_with(|| {
            grouped.push((record.user_id.clone(), Vec::new()));
            grouped.len() - 1
        });
        grouped[k].1.push(record);
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} interaction rows referencing items missing from the catalog");
    }

    let histories = grouped
        .into_iter()
        .map(|(user, events)| UserHistory::from_events(user, events))
        .collect();
    Ok(Ingested {
        histories,
        catalog,
        dropped_unknown_items: dropped,
    })
}
