//! Group-relative policy optimization for a tabular toy policy.

mod math;
mod objective;
mod table;
pub mod toy;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use math::{clip, group_advantages, kl_categorical, softmax, surrogate_active, token_surrogate};
pub use objective::{grpo_step, objective, GroupBatch, LossTerm, ObjectiveValue, StepStats};
pub use table::{PolicySnapshot, Role, SoftmaxTable};
pub use train::{evaluate_policy, sample_group, train_toy, EvalRecord, LogRecord, RolloutSummary, StepRecord, TrainingLog};

#[derive(Debug, Error)]
pub enum GrpoError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("KL is infinite: reference assigns zero mass to outcome {index}")]
    InfiniteKl { index: usize },
    #[error("non-finite gradient in epoch {epoch}: component {index} is {value} (objective {objective})")]
    NonFiniteGradient {
        epoch: usize,
        index: usize,
        value: f64,
        objective: f64,
    },
    #[error("training diverged at step {step}")]
    Divergence { step: usize, log: Box<TrainingLog> },
    #[error("episode failed: {0}")]
    Episode(#[from] crate::episode::EpisodeError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrpoConfig {
    pub group_size: usize,
    pub clip_eps: f64,
    pub kl_coeff: f64,
    pub temperature: f64,
    pub advantage_epsilon: f64,
    pub learning_rate: f64,
    pub steps: usize,
    /// Prompts sampled per step; each yields one group.
    pub prompts_per_step: usize,
    /// Ascent passes over one rollout batch.
    pub inner_epochs: usize,
    pub eval_every: usize,
    /// Samples per case at each evaluation.
    pub eval_samples: usize,
    /// Initial logit bonus for both tool-call actions.
    pub tool_bias: f64,
    pub max_turns: usize,
    pub token_budget: usize,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        Self {
            group_size: 8,
            clip_eps: 0.2,
            kl_coeff: 0.001,
            temperature: 1.0,
            advantage_epsilon: 1e-8,
            learning_rate: 2.0,
            steps: 2000,
            prompts_per_step: 4,
            inner_epochs: 1,
            eval_every: 100,
            eval_samples: 4,
            tool_bias: 1.5,
            max_turns: 5,
            token_budget: 4096,
        }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<(), GrpoError> {
        let bad = |m: &str| Err(GrpoError::Config(m.to_string()));
        if self.group_size < 2 {
            return bad("group size must be at least 2");
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return bad("clip ratio must lie in (0, 1)");
        }
        if !(self.kl_coeff >= 0.0) {
            return bad("KL coefficient must be non-negative");
        }
        if !(self.temperature >= 0.0) || !self.temperature.is_finite() {
            return bad("temperature must be finite and non-negative");
        }
        if !(self.advantage_epsilon > 0.0) {
            return bad("advantage epsilon must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.prompts_per_step == 0 || self.eval_samples == 0 || self.token_budget == 0 {
            return bad("prompts per step, eval samples and token budget must be positive");
        }
        Ok(())
    }

    /// Digest recorded in checkpoints.
    pub fn digest(&self) -> String {
        crate::dataset::sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}
