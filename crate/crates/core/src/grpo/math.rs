//! Advantage, surrogate and divergence primitives.

use super::GrpoError;

/// Standardizes rewards within one group using the population standard
/// deviation, floored at `advantage_epsilon`.
pub fn group_advantages(rewards: &[f64], advantage_epsilon: f64) -> Vec<f64> {
    if rewards.is_empty() {
        return Vec::new();
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(advantage_epsilon);
    rewards.iter().map(|r| (r - mean) / std).collect()
}

pub fn clip(r: f64, eps: f64) -> f64 {
    r.clamp(1.0 - eps, 1.0 + eps)
}

/// `min(r A, clip(r, 1-eps, 1+eps) A)`.
pub fn token_surrogate(ratio: f64, advantage: f64, eps: f64) -> f64 {
    (ratio * advantage).min(clip(ratio, eps) * advantage)
}

/// Whether the unclipped branch is the minimum, i.e. the surrogate depends on
/// the ratio.
pub fn surrogate_active(ratio: f64, advantage: f64, eps: f64) -> bool {
    ratio * advantage <= clip(ratio, eps) * advantage
}

/// Exact `KL(p || q)` between categorical distributions.
pub fn kl_categorical(p: &[f64], q: &[f64]) -> Result<f64, GrpoError> {
    if p.len() != q.len() {
        return Err(GrpoError::Shape(format!("distributions of length {} and {}", p.len(), q.len())));
    }
    let mut kl = 0.0;
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi <= 0.0 {
            continue;
        }
        if qi <= 0.0 {
            return Err(GrpoError::InfiniteKl { index: i });
        }
        kl += pi * (pi / qi).ln();
    }
    Ok(kl.max(0.0))
}

/// Softmax of `logits / temperature`. Temperature zero puts all mass on the
/// first maximal logit.
pub fn softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    if temperature <= 0.0 {
        let best = argmax(logits);
        return (0..logits.len()).map(|i| if i == best { 1.0 } else { 0.0 }).collect();
    }
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| ((z - m) / temperature).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
