//! The clipped, KL-regularized group objective and its exact gradient.

use serde::{Deserialize, Serialize};

use super::math::{clip, kl_categorical, surrogate_active, token_surrogate};
use super::table::SoftmaxTable;
use super::{GrpoConfig, GrpoError};
use crate::episode::{Decision, Trajectory};

/// The part of one trajectory the loss depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossTerm {
    /// Sampled decisions with log-probabilities under the rollout parameters.
    pub decisions: Vec<Decision>,
    /// `|y_i|`: generated tokens, tool responses excluded.
    pub generated_tokens: usize,
    pub advantage: f64,
}

/// `G` trajectories for one prompt with their rewards and advantages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupBatch {
    pub case: usize,
    pub trajectories: Vec<Trajectory>,
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
}

impl GroupBatch {
    pub fn loss_terms(&self) -> Vec<LossTerm> {
        self.trajectories
            .iter()
            .zip(&self.advantages)
            .map(|(t, a)| LossTerm {
                decisions: t.decisions().copied().collect(),
                generated_tokens: t.stats.generated_tokens,
                advantage: *a,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveValue {
    pub value: f64,
    pub grad: Vec<f64>,
    /// Mean KL over decision tokens.
    pub mean_kl: f64,
    /// Fraction of decision tokens whose ratio falls outside the clip range.
    pub clip_fraction: f64,
    pub decision_tokens: usize,
}

/// Evaluates the objective
/// `1/M sum_i 1/|y_i| sum_t [min(r A_i, clip(r) A_i) - beta KL_t]`
/// and its gradient with respect to `policy.logits`.
///
/// Tokens that do not carry a decision are deterministic template tokens: their
/// ratio is 1 and their KL is 0 under every parameter setting.
pub fn objective(
    policy: &SoftmaxTable,
    reference: &SoftmaxTable,
    terms: &[LossTerm],
    config: &GrpoConfig,
) -> Result<ObjectiveValue, GrpoError> {
    if policy.n_states != reference.n_states || policy.n_actions != reference.n_actions {
        return Err(GrpoError::Shape("policy and reference tables differ in shape".into()));
    }
    let t = config.temperature;
    if t <= 0.0 {
        return Err(GrpoError::Config("training needs a positive temperature".into()));
    }
    let na = policy.n_actions;
    let mut grad = vec![0.0; policy.n_params()];
    let mut value = 0.0;
    let (mut kl_sum, mut clipped, mut count) = (0.0, 0usize, 0usize);
    let m = terms.len().max(1) as f64;

    for term in terms {
        if term.generated_tokens == 0 {
            continue;
        }
        let w = 1.0 / (m * term.generated_tokens as f64);
        let a = term.advantage;
        let free_tokens = term.generated_tokens.saturating_sub(term.decisions.len());
        value += w * free_tokens as f64 * a;
        for d in &term.decisions {
            if d.state >= policy.n_states || d.action >= na {
                return Err(GrpoError::Shape(format!("decision ({}, {}) outside the table", d.state, d.action)));
            }
            let p = policy.probs(d.state, t);
            let q = reference.probs(d.state, t);
            let ratio = (p[d.action].ln() - d.logprob).exp();
            let kl = kl_categorical(&p, &q)?;
            value += w * (token_surrogate(ratio, a, config.clip_eps) - config.kl_coeff * kl);
            kl_sum += kl;
            count += 1;
            if clip(ratio, config.clip_eps) != ratio {
                clipped += 1;
            }
            let row = &mut grad[d.state * na..(d.state + 1) * na];
            if surrogate_active(ratio, a, config.clip_eps) {
                for (b, g) in row.iter_mut().enumerate() {
                    let indicator = if b == d.action { 1.0 } else { 0.0 };
                    *g += w * a * ratio * (indicator - p[b]) / t;
                }
            }
            if config.kl_coeff != 0.0 {
                for (b, g) in row.iter_mut().enumerate() {
                    *g -= w * config.kl_coeff * p[b] * (p[b].ln() - q[b].ln() - kl) / t;
                }
            }
        }
    }
    let denom = count.max(1) as f64;
    Ok(ObjectiveValue {
        value,
        grad,
        mean_kl: kl_sum / denom,
        clip_fraction: clipped as f64 / denom,
        decision_tokens: count,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub objective: f64,
    pub mean_reward: f64,
    pub mean_kl: f64,
    pub clip_fraction: f64,
    pub mean_retrieval_calls: f64,
    pub mean_generated_tokens: f64,
    pub grad_norm: f64,
}

/// One update: `config.inner_epochs` ascent steps on the objective with the
/// rollout log-probabilities held fixed.
pub fn grpo_step(
    policy: &mut SoftmaxTable,
    reference: &SoftmaxTable,
    batches: &[GroupBatch],
    config: &GrpoConfig,
) -> Result<StepStats, GrpoError> {
    let terms: Vec<LossTerm> = batches.iter().flat_map(GroupBatch::loss_terms).collect();
    let trajectories: Vec<&Trajectory> = batches.iter().flat_map(|b| &b.trajectories).collect();
    let rewards: Vec<f64> = batches.iter().flat_map(|b| b.rewards.iter().copied()).collect();
    let n = trajectories.len().max(1) as f64;

    let mut first: Option<ObjectiveValue> = None;
    let mut clip_total = 0.0;
    let mut grad_norm = 0.0;
    for epoch in 0..config.inner_epochs.max(1) {
        let eval = objective(policy, reference, &terms, config)?;
        grad_norm = eval.grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if let Some(bad) = eval.grad.iter().position(|g| !g.is_finite()) {
            return Err(GrpoError::NonFiniteGradient {
                epoch,
                index: bad,
                value: eval.grad[bad],
                objective: eval.value,
            });
        }
        for (theta, g) in policy.logits.iter_mut().zip(&eval.grad) {
            *theta += config.learning_rate * g;
        }
        clip_total += eval.clip_fraction;
        first.get_or_insert(eval);
    }
    let first = first.expect("at least one epoch");
    Ok(StepStats {
        objective: first.value,
        mean_reward: rewards.iter().sum::<f64>() / rewards.len().max(1) as f64,
        mean_kl: first.mean_kl,
        clip_fraction: clip_total / config.inner_epochs.max(1) as f64,
        mean_retrieval_calls: trajectories.iter().map(|t| t.stats.retrieval_calls as f64).sum::<f64>() / n,
        mean_generated_tokens: trajectories.iter().map(|t| t.stats.generated_tokens as f64).sum::<f64>() / n,
        grad_norm,
    })
}
