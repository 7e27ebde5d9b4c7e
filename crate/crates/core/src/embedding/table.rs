use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::Deserialize;

use super::{Embedder, EmbeddingError, Vector};

/// Precomputed vectors keyed by the exact text they encode.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VectorTable {
    dim: usize,
    vectors: HashMap<String, Vector>,
}

#[derive(Deserialize)]
struct JsonRow {
    key: String,
    vector: Vec<f64>,
}

impl VectorTable {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&Vector> {
        self.vectors.get(key)
    }

    /// Inserts a vector, normalizing it. The first insert fixes the dimension.
    pub fn insert(&mut self, key: impl Into<String>, values: Vec<f64>) -> Result<(), EmbeddingError> {
        if self.vectors.is_empty() && self.dim == 0 {
            self.dim = values.len();
        } else if values.len() != self.dim {
            return Err(EmbeddingError::Dimension {
                expected: self.dim,
                got: values.len(),
            });
        }
        self.vectors.insert(key.into(), Vector::from_raw(values)?);
        Ok(())
    }
}

impl Embedder for VectorTable {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vector, EmbeddingError> {
        if text.trim().is_empty() {
            return Ok(Vector::empty(self.dim));
        }
        self.vectors
            .get(text)
            .cloned()
            .ok_or_else(|| EmbeddingError::UnknownKey(text.to_string()))
    }
}

/// Parses an external vector file. Each line is either a JSON object
/// `{"key": ..., "vector": [...]}` or `key<TAB>v1 v2 ...`. Vectors are
/// re-normalized; ragged dimensions and non-finite entries are rejected.
pub fn read_external_vectors(reader: impl Read) -> Result<VectorTable, EmbeddingError> {
    let mut table = VectorTable::default();
    for (n, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = n + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let (key, values) = if trimmed.starts_with('{') {
            let row: JsonRow = serde_json::from_str(trimmed).map_err(|e| EmbeddingError::Format {
                line: line_no,
                message: e.to_string(),
            })?;
            (row.key, row.vector)
        } else {
            let (key, rest) = line.split_once('\t').ok_or_else(|| EmbeddingError::Format {
                line: line_no,
                message: "expected key<TAB>values".into(),
            })?;
            let values = rest
                .split_whitespace()
                .map(|v| v.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| EmbeddingError::Format {
                    line: line_no,
                    message: e.to_string(),
                })?;
            (key.to_string(), values)
        };
        if values.is_empty() {
            return Err(EmbeddingError::Format {
                line: line_no,
                message: "empty vector".into(),
            });
        }
        table.insert(key, values).map_err(|e| match e {
            EmbeddingError::Dimension { expected, got } => EmbeddingError::Format {
                line: line_no,
                message: format!("ragged dimension: expected {expected}, got {got}"),
            },
            EmbeddingError::NonFinite => EmbeddingError::Format {
                line: line_no,
                message: "non-finite entry".into(),
            },
            other => other,
        })?;
    }
    Ok(table)
}

pub fn load_external_vectors(path: &Path) -> Result<VectorTable, EmbeddingError> {
    read_external_vectors(File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loads_and_detects_dimension() {
        let text = "a\t1 0 0\nb\t0 1 0\n{\"key\": \"c\", \"vector\": [0, 0, 1]}\n";
        let table = read_external_vectors(text.as_bytes()).unwrap();
        assert_eq!(table.len(), 3);
        assert_eq!(table.dim(), 3);
        assert_eq!(table.embed("c").unwrap().values(), &[0.0, 0.0, 1.0]);
        assert!(matches!(table.embed("zzz"), Err(EmbeddingError::UnknownKey(_))));
    }

    #[test]
    fn rejects_nan() {
        let err = read_external_vectors("a\t1 NaN\n".as_bytes()).unwrap_err();
        assert!(matches!(err, EmbeddingError::Format { line: 1, .. }));
    }

    #[test]
    fn rejects_ragged() {
        let err = read_external_vectors("a\t1 0\nb\t1 0 0\n".as_bytes()).unwrap_err();
        assert!(matches!(err, EmbeddingError::Format { line: 2, .. }));
    }

    #[test]
    fn renormalizes() {
        let table = read_external_vectors("a\t2 0\n".as_bytes()).unwrap();
        let v = table.get("a").unwrap();
        assert!((v.norm() - 1.0).abs() < 1e-12);
        assert_eq!(v.values(), &[1.0, 0.0]);
    }
}
