use super::{Embedder, EmbeddingError, Vector};

pub const DEFAULT_DIM: usize = 256;

/// Signed feature hashing of lowercase character trigrams.
///
/// Text is lowercased and whitespace runs collapse to one space. Each trigram is
/// hashed with 64-bit FNV-1a; the low bits pick the bucket and the top bit the
/// sign. Text shorter than three characters hashes as a single gram.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedder {
    dim: usize,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self { dim: DEFAULT_DIM }
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }

    pub fn normalize(text: &str) -> String {
        text.split_whitespace()
            .map(str::to_lowercase)
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Character trigrams of the normalized text, in order, with repeats.
    pub fn grams(text: &str) -> Vec<String> {
        let chars: Vec<char> = Self::normalize(text).chars().collect();
        match chars.len() {
            0 => Vec::new(),
            1 | 2 => vec![chars.iter().collect()],
            _ => chars.windows(3).map(|w| w.iter().collect()).collect(),
        }
    }

    /// Bucket index and sign for one gram.
    pub fn slot(&self, gram: &str) -> (usize, f64) {
        let h = fnv1a64(gram.as_bytes());
        let bucket = (h % self.dim as u64) as usize;
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        (bucket, sign)
    }

    pub fn raw_counts(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for g in Self::grams(text) {
            let (bucket, sign) = self.slot(&g);
            v[bucket] += sign;
        }
        v
    }
}

impl Embedder for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vector, EmbeddingError> {
        Vector::from_raw(self.raw_counts(text))
    }
}
