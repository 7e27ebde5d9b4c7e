//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use super::PipelineError;

/// Parsed configuration. Later assignments and overrides replace earlier ones.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    /// Parses lines of `key = value`; blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split_once('#').map_or(raw, |(head, _)| head).trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| PipelineError::Config(format!("line {}: expected `key = value`", n + 1)))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(PipelineError::Config(format!("line {}: empty key", n + 1)));
            }
            values.insert(key.to_string(), value.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.values.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, PipelineError> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| PipelineError::Config(format!("`{key}` has an invalid value {v:?}"))),
        }
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T, PipelineError> {
        let v = self.get(key).ok_or_else(|| PipelineError::MissingKey(key.to_string()))?;
        v.parse()
            .map_err(|_| PipelineError::Config(format!("`{key}` has an invalid value {v:?}")))
    }

    pub fn flag(&self, key: &str) -> Result<bool, PipelineError> {
        match self.get(key) {
            None => Ok(false),
            Some("true" | "yes" | "1" | "on") => Ok(true),
            Some("false" | "no" | "0" | "off") => Ok(false),
            Some(v) => Err(PipelineError::Config(format!("`{key}` must be a boolean, got {v:?}"))),
        }
    }

    pub fn list<T: FromStr + Clone>(&self, key: &str, default: &[T]) -> Result<Vec<T>, PipelineError> {
        match self.get(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|s| s.trim())
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse()
                        .map_err(|_| PipelineError::Config(format!("`{key}` has an invalid entry {s:?}")))
                })
                .collect(),
        }
    }

    /// Canonical `key = value` rendering, sorted by key.
    pub fn canonical(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn digest(&self) -> String {
        crate::dataset::sha256_hex(self.canonical().as_bytes())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_overrides() {
        let mut c = RunConfig::parse("# run\nseed = 7\nprofile=goodreads # inline\n\ncutoffs = 5, 10\nseed = 8\n").unwrap();
        assert_eq!(c.require::<u64>("seed").unwrap(), 8);
        assert_eq!(c.get("profile"), Some("goodreads"));
        assert_eq!(c.list::<usize>("cutoffs", &[]).unwrap(), vec![5, 10]);
        c.set("seed", 9);
        assert_eq!(c.require::<u64>("seed").unwrap(), 9);
        assert!(matches!(c.require::<u64>("missing"), Err(PipelineError::MissingKey(_))));
        assert!(RunConfig::parse("no equals sign").is_err());
    }

    #[test]
    fn digest_ignores_formatting() {
        let a = RunConfig::parse("a = 1\nb = 2").unwrap();
        let b = RunConfig::parse("b=2\n# x\na =1").unwrap();
        assert_eq!(a.digest(), b.digest());
    }
}
