//! Seeded demo data with a strong sequential signal: every user walks a shared
//! chain of items, so the item after `i` is usually `i + 1`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DatasetError, InteractionRecord, ItemRecord};

const ADJECTIVES: [&str; 12] = [
    "Silent", "Crimson", "Hidden", "Broken", "Golden", "Distant", "Hollow", "Frozen", "Burning", "Gentle", "Iron",
    "Paper",
];
const NOUNS: [&str; 10] = ["Harbor", "Garden", "Empire", "River", "Signal", "Mirror", "Orchard", "Lantern", "Voyage", "Tower"];
const GENRES: [&str; 6] = ["Drama", "Comedy", "Thriller", "Western", "Animation", "Documentary"];

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub n_users: usize,
    pub n_items: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Probability of skipping ahead two items instead of one.
    pub skip_prob: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_users: 300,
            n_items: 120,
            min_len: 10,
            max_len: 20,
            skip_prob: 0.0,
            seed: 11,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub interactions: Vec<InteractionRecord>,
    pub items: Vec<ItemRecord>,
}

pub fn synthetic_title(i: usize) -> String {
    let a = ADJECTIVES[i % ADJECTIVES.len()];
    let n = NOUNS[(i / ADJECTIVES.len()) % NOUNS.len()];
    match i / (ADJECTIVES.len() * NOUNS.len()) {
        0 => format!("The {a} {n}"),
        k => format!("The {a} {n} {}", k + 1),
    }
}

pub fn synthetic_item_id(i: usize) -> String {
    format!("i{i:04}")
}

pub fn generate(spec: &SyntheticSpec) -> SyntheticData {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let items = (0..spec.n_items)
        .map(|i| {
            let main = GENRES[i % GENRES.len()];
            let second = GENRES[(i % GENRES.len() + 1 + (i / GENRES.len()) % (GENRES.len() - 1)) % GENRES.len()];
            ItemRecord::new(synthetic_item_id(i), synthetic_title(i))
                .with_field("director", format!("Director {}", i % 17))
                .with_field("all_genres", format!("{main}, {second}"))
                .with_field("main_genre", main)
        })
        .collect();
    let mut interactions = Vec::new();
    for u in 0..spec.n_users {
        let len = rng.random_range(spec.min_len..=spec.max_len.max(spec.min_len));
        let mut item = rng.random_range(0..spec.n_items);
        let mut t = 1_000_000 + (u as i64) * 7 + rng.random_range(0..1000);
        for _ in 0..len {
            interactions.push(InteractionRecord::new(format!("u{u:04}"), synthetic_item_id(item), t));
            let step = if rng.random_bool(spec.skip_prob) { 2 } else { 1 };
            item = (item + step) % spec.n_items;
            t += rng.random_range(1..500);
        }
    }
    SyntheticData { interactions, items }
}

impl SyntheticData {
    /// Writes `interactions.csv` and `catalog.jsonl` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf), DatasetError> {
        let io = |p: &Path, e: std::io::Error| DatasetError::Io {
            path: p.display().to_string(),
            source: e,
        };
        fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        let inter = dir.join("interactions.csv");
        let mut w = csv::Writer::from_path(&inter).map_err(|e| io(&inter, e.into()))?;
        w.write_record(["user_id", "item_id", "timestamp"]).map_err(|e| io(&inter, e.into()))?;
        for r in &self.interactions {
            w.write_record([r.user_id.as_str(), r.item_id.as_str(), &r.timestamp.to_string()])
                .map_err(|e| io(&inter, e.into()))?;
        }
        w.flush().map_err(|e| io(&inter, e))?;
        let cat = dir.join("catalog.jsonl");
        let mut f = fs::File::create(&cat).map_err(|e| io(&cat, e))?;
        for item in &self.items {
            let mut obj = serde_json::Map::new();
            obj.insert("item_id".into(), item.item_id.clone().into());
            obj.insert("title".into(), item.title.clone().into());
            for (k, v) in &item.metadata {
                obj.insert(k.clone(), v.clone().into());
            }
            writeln!(f, "{}", serde_json::Value::Object(obj)).map_err(|e| io(&cat, e))?;
        }
        Ok((inter, cat))
    }
}
