//! Tabular softmax policy parameters.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::math::{argmax, softmax};
use super::GrpoError;

/// One logit per (state, action), row-major by state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxTable {
    pub n_states: usize,
    pub n_actions: usize,
    pub logits: Vec<f64>,
}

impl SoftmaxTable {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            logits: vec![0.0; n_states * n_actions],
        }
    }

    pub fn from_logits(n_states: usize, n_actions: usize, logits: Vec<f64>) -> Result<Self, GrpoError> {
        if logits.len() != n_states * n_actions || n_actions == 0 {
            return Err(GrpoError::Shape(format!(
                "{} logits for {n_states} states x {n_actions} actions",
                logits.len()
            )));
        }
        Ok(Self {
            n_states,
            n_actions,
            logits,
        })
    }

    /// Adds `bias` to `action` in every state.
    pub fn with_action_bias(mut self, action: usize, bias: f64) -> Self {
        for s in 0..self.n_states {
            self.logits[s * self.n_actions + action] += bias;
        }
        self
    }

    pub fn n_params(&self) -> usize {
        self.logits.len()
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.logits[state * self.n_actions..(state + 1) * self.n_actions]
    }

    pub fn probs(&self, state: usize, temperature: f64) -> Vec<f64> {
        softmax(self.row(state), temperature)
    }

    pub fn log_prob(&self, state: usize, action: usize, temperature: f64) -> f64 {
        self.probs(state, temperature)[action].ln()
    }

    /// Draws an action; temperature zero picks the greedy action.
    pub fn sample(&self, state: usize, temperature: f64, rng: &mut impl Rng) -> (usize, f64) {
        if temperature <= 0.0 {
            return (argmax(self.row(state)), 0.0);
        }
        let p = self.probs(state, temperature);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = p.len() - 1;
        for (a, pa) in p.iter().enumerate() {
            acc += pa;
            if u < acc {
                pick = a;
                break;
            }
        }
        (pick, p[pick].ln())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Acting,
    Old,
    Reference,
}

/// Parameters tagged with their role and the digest of the producing config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySnapshot {
    pub role: Role,
    pub config_digest: String,
    pub table: SoftmaxTable,
}

impl PolicySnapshot {
    pub fn save(&self, path: &Path) -> Result<(), GrpoError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| GrpoError::Checkpoint(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| GrpoError::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, GrpoError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| GrpoError::Checkpoint(format!("{}: {e}", path.display())))?;
        let snap: Self = serde_json::from_str(&text).map_err(|e| GrpoError::Checkpoint(e.to_string()))?;
        SoftmaxTable::from_logits(snap.table.n_states, snap.table.n_actions, snap.table.logits.clone())?;
        Ok(snap)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sampling_matches_probs() {
        let t = SoftmaxTable::from_logits(1, 3, vec![0.0, 1.0, -1.0]).unwrap();
        let p = t.probs(0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut counts = [0usize; 3];
        for _ in 0..20000 {
            let (a, lp) = t.sample(0, 1.0, &mut rng);
            assert!((lp - p[a].ln()).abs() < 1e-15);
            counts[a] += 1;
        }
        for a in 0..3 {
            assert!((counts[a] as f64 / 20000.0 - p[a]).abs() < 0.02);
        }
        assert_eq!(t.sample(0, 0.0, &mut rng), (1, 0.0));
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ref.json");
        let snap = PolicySnapshot {
            role: Role::Reference,
            config_digest: "abc".into(),
            table: SoftmaxTable::zeros(2, 3).with_action_bias(1, 1.5),
        };
        snap.save(&path).unwrap();
        assert_eq!(PolicySnapshot::load(&path).unwrap(), snap);
        assert!(SoftmaxTable::from_logits(2, 3, vec![0.0; 5]).is_err());
    }
}
