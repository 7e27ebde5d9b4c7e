use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{DatasetError, InteractionRecord, UserHistory};

/// One next-item prediction case: every event before `position`, and the event at it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NextItemExample {
    pub user_id: String,
    /// Index of the target inside the user's sorted history.
    pub position: usize,
    pub prefix: Vec<InteractionRecord>,
    pub target: InteractionRecord,
}

impl NextItemExample {
    /// Every interaction the example touches, target included.
    pub fn interactions(&self) -> impl Iterator<Item = &InteractionRecord> {
        self.prefix.iter().chain(std::iter::once(&self.target))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    /// Relative train/validation/test shares applied per user in time order.
    pub ratios: [f64; 3],
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub seed: u64,
    /// Drop memory records later than the earliest sampled test target.
    pub no_look_ahead: bool,
    /// Upper bound on the memory pool; larger pools are sampled down uniformly.
    pub memory_cap: Option<usize>,
}

impl SplitConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            ratios: [8.0, 1.0, 1.0],
            n_train: 4096,
            n_val: 512,
            n_test: 1000,
            seed,
            no_look_ahead: true,
            memory_cap: None,
        }
    }

    pub fn with_sizes(mut self, n_train: usize, n_val: usize, n_test: usize) -> Self {
        self.n_train = n_train;
        self.n_val = n_val;
        self.n_test = n_test;
        self
    }

    pub fn with_memory_cap(mut self, cap: Option<usize>) -> Self {
        self.memory_cap = cap;
        self
    }

    pub fn with_look_ahead_guard(mut self, enabled: bool) -> Self {
        self.no_look_ahead = enabled;
        self
    }

    /// Splits `n` chronological examples of one user into (train, val, test) counts.
    fn partition(&self, n: usize) -> (usize, usize, usize) {
        let total: f64 = self.ratios.iter().sum();
        if total <= 0.0 || n == 0 {
            return (n, 0, 0);
        }
        let test = ((n as f64) * self.ratios[2] / total).round() as usize;
        let val = ((n as f64) * self.ratios[1] / total).round() as usize;
        let test = test.min(n);
        let val = val.min(n - test);
        (n - val - test, val, test)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub users: usize,
    pub total_examples: usize,
    pub train_pool: usize,
    pub val_pool: usize,
    pub test_pool: usize,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    /// Pool size after exclusions and the look-ahead guard, before the cap.
    pub memory_pool_uncapped: usize,
    pub look_ahead_dropped: usize,
    pub memory_pool: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitBundle {
    pub config: SplitConfig,
    pub counts: SplitCounts,
    pub train: Vec<NextItemExample>,
    pub validation: Vec<NextItemExample>,
    pub test: Vec<NextItemExample>,
    pub memory_pool: Vec<InteractionRecord>,
}

/// Recorded next to the split files: the seed, configuration, counts and a
/// SHA-256 digest of each split's canonical line encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub config: SplitConfig,
    pub counts: SplitCounts,
    pub digests: BTreeMap<String, String>,
}

type Key<'a> = (&'a str, &'a str, i64);

fn key(r: &InteractionRecord) -> Key<'_> {
    (r.user_id.as_str(), r.item_id.as_str(), r.timestamp)
}

fn example_at(history: &UserHistory, position: usize) -> NextItemExample {
    NextItemExample {
        user_id: history.user_id.clone(),
        position,
        prefix: history.events[..position].to_vec(),
        target: history.events[position].clone(),
    }
}

fn draw(
    rng: &mut ChaCha8Rng,
    pool: &[(usize, usize)],
    amount: usize,
    split: &'static str,
) -> Result<Vec<(usize, usize)>, DatasetError> {
    if amount > pool.len() {
        return Err(DatasetError::Sizing {
            split,
            requested: amount,
            available: pool.len(),
        });
    }
    let mut picked = sample(rng, pool.len(), amount).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|k| pool[k]).collect())
}

/// Forms next-item examples, splits them per user in time order, subsamples each
/// split and gathers the memory pool from every interaction no sampled example
/// touches.
pub fn split_and_subsample(
    histories: &[UserHistory],
    config: &SplitConfig,
) -> Result<SplitBundle, DatasetError> {
    if config.ratios.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(DatasetError::Argument("split ratios must be non-negative".into()));
    }
    let mut pools: [Vec<(usize, usize)>; 3] = Default::default();
    for (u, h) in histories.iter().enumerate() {
        let n = h.len().saturating_sub(1);
        let (tr, va, _) = config.partition(n);
        for position in 1..=n {
            let slot = if position <= tr {
                0
            } else if position <= tr + va {
                1
            } else {
                2
            };
            pools[slot].push((u, position));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let train_idx = draw(&mut rng, &pools[0], config.n_train, "train")?;
    let val_idx = draw(&mut rng, &pools[1], config.n_val, "validation")?;
    let test_idx = draw(&mut rng, &pools[2], config.n_test, "test")?;

    // Sampled examples cover each user's events up to their latest sampled target.
    let mut used_upto: Vec<Option<usize>> = vec![None; histories.len()];
    for &(u, pos) in train_idx.iter().chain(&val_idx).chain(&test_idx) {
        used_upto[u] = Some(used_upto[u].map_or(pos, |p| p.max(pos)));
    }
    let mut used: HashSet<Key<'_>> = HashSet::new();
    for (u, upto) in used_upto.iter().enumerate() {
        if let Some(upto) = upto {
            used.extend(histories[u].events[..=*upto].iter().map(key));
        }
    }

    let cutoff = if config.no_look_ahead {
        test_idx
            .iter()
            .map(|&(u, pos)| histories[u].events[pos].timestamp)
            .min()
    } else {
        None
    };

    let mut look_ahead_dropped = 0usize;
    let mut pool: Vec<InteractionRecord> = Vec::new();
    for h in histories {
        for e in &h.events {
            if used.contains(&key(e)) {
                continue;
            }
            if cutoff.is_some_and(|c| e.timestamp > c) {
                look_ahead_dropped += 1;
                continue;
            }
            pool.push(e.clone());
        }
    }
    let uncapped = pool.len();
    if let Some(cap) = config.memory_cap {
        if pool.len() > cap {
            let mut keep = sample(&mut rng, pool.len(), cap).into_vec();
            keep.sort_unstable();
            pool = keep.into_iter().map(|k| pool[k].clone()).collect();
        }
    }

    let build = |idx: &[(usize, usize)]| -> Vec<NextItemExample> {
        idx.iter().map(|&(u, p)| example_at(&histories[u], p)).collect()
    };
    let (train, validation, test) = (build(&train_idx), build(&val_idx), build(&test_idx));
    let counts = SplitCounts {
        users: histories.len(),
        total_examples: pools.iter().map(Vec::len).sum(),
        train_pool: pools[0].len(),
        val_pool: pools[1].len(),
        test_pool: pools[2].len(),
        train: train.len(),
        validation: validation.len(),
        test: test.len(),
        memory_pool_uncapped: uncapped,
        look_ahead_dropped,
        memory_pool: pool.len(),
    };
    Ok(SplitBundle {
        config: config.clone(),
        counts,
        train,
        validation,
        test,
        memory_pool: pool,
    })
}

const SPLIT_FILES: [&str; 4] = ["train", "validation", "test", "memory_pool"];

fn lines_of<T: Serialize>(rows: &[T]) -> String {
    let mut out = String::new();
    for row in rows {
        out.push_str(&serde_json::to_string(row).expect("split rows serialize"));
        out.push('\n');
    }
    out
}

fn read_lines<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, DatasetError> {
    let file = fs::File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| DatasetError::Format {
            path: path.display().to_string(),
            message: format!("line {}: {e}", n + 1),
        })?);
    }
    Ok(out)
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl SplitBundle {
    fn encoded(&self) -> [String; 4] {
        [
            lines_of(&self.train),
            lines_of(&self.validation),
            lines_of(&self.test),
            lines_of(&self.memory_pool),
        ]
    }

    pub fn manifest(&self) -> SplitManifest {
        let digests = SPLIT_FILES
            .iter()
            .zip(self.encoded())
            .map(|(name, body)| (name.to_string(), sha256_hex(body.as_bytes())))
            .collect();
        SplitManifest {
            seed: self.config.seed,
            config: self.config.clone(),
            counts: self.counts.clone(),
            digests,
        }
    }

    /// Every example across the three splits.
    pub fn examples(&self) -> impl Iterator<Item = &NextItemExample> {
        self.train.iter().chain(&self.validation).chain(&self.test)
    }

    /// Users that own at least one split example.
    pub fn example_users(&self) -> HashSet<&str> {
        self.examples().map(|e| e.user_id.as_str()).collect()
    }

    /// Number of memory-pool records that coincide with an interaction used by a
    /// split example. Zero for every bundle produced by [`split_and_subsample`].
    pub fn leaked_records(&self) -> usize {
        let used: HashSet<Key<'_>> = self
            .examples()
            .flat_map(NextItemExample::interactions)
            .map(key)
            .collect();
        self.memory_pool.iter().filter(|r| used.contains(&key(r))).count()
    }

    /// Writes `train.jsonl`, `validation.jsonl`, `test.jsonl`, `memory_pool.jsonl`
    /// and `split_manifest.json` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<SplitManifest, DatasetError> {
        let io = |source| DatasetError::Io {
            path: dir.display().to_string(),
            source,
        };
        fs::create_dir_all(dir).map_err(io)?;
        for (name, body) in SPLIT_FILES.iter().zip(self.encoded()) {
            let path = dir.join(format!("{name}.jsonl"));
            let mut w = BufWriter::new(fs::File::create(&path).map_err(io)?);
            w.write_all(body.as_bytes()).map_err(io)?;
            w.flush().map_err(io)?;
        }
        let manifest = self.manifest();
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(dir.join("split_manifest.json"), text + "\n").map_err(io)?;
        Ok(manifest)
    }

    /// Reads a directory written by [`SplitBundle::write_dir`], checking digests.
    pub fn read_dir(dir: &Path) -> Result<Self, DatasetError> {
        let manifest_path = dir.join("split_manifest.json");
        let text = fs::read_to_string(&manifest_path).map_err(|source| DatasetError::Io {
            path: manifest_path.display().to_string(),
            source,
        })?;
        let manifest: SplitManifest =
            serde_json::from_str(&text).map_err(|e| DatasetError::Format {
                path: manifest_path.display().to_string(),
                message: e.to_string(),
            })?;
        let bundle = SplitBundle {
            config: manifest.config.clone(),
            counts: manifest.counts.clone(),
            train: read_lines(&dir.join("train.jsonl"))?,
            validation: read_lines(&dir.join("validation.jsonl"))?,
            test: read_lines(&dir.join("test.jsonl"))?,
            memory_pool: read_lines(&dir.join("memory_pool.jsonl"))?,
        };
        if bundle.manifest().digests != manifest.digests {
            return Err(DatasetError::Format {
                path: dir.display().to_string(),
                message: "split files do not match the manifest digests".into(),
            });
        }
        Ok(bundle)
    }
}
