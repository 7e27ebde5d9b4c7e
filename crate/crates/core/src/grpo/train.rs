//! Rollouts, evaluation and the training loop for the toy environment.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::math::group_advantages;
use super::objective::{grpo_step, GroupBatch};
use super::table::SoftmaxTable;
use super::toy::{CaseKind, ToyEnvSpec, ToyEnvironment, ToyPolicy};
use super::{GrpoConfig, GrpoError};
use crate::episode::{run_episode, EpisodeConfig};

/// Per-episode quantities kept for behavior reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutSummary {
    pub step: usize,
    pub case: usize,
    pub kind: CaseKind,
    pub retrieval_calls: usize,
    pub generated_tokens: usize,
    pub reward: f64,
    pub parse_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub mean_reward: f64,
    pub mean_kl: f64,
    pub clip_fraction: f64,
    pub mean_retrieval_calls: f64,
    pub mean_generated_tokens: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub step: usize,
    pub episodes: usize,
    pub mean_reward: f64,
    pub mean_retrieval_calls: f64,
    pub mean_generated_tokens: f64,
    /// Share of episodes on prompt-answerable cases that issued any retrieval.
    pub retrieval_rate_answerable: f64,
    /// Share of episodes on memory-dependent cases that issued any retrieval.
    pub retrieval_rate_memory: f64,
    pub parse_failure_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogRecord {
    Step(StepRecord),
    Eval(EvalRecord),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub records: Vec<LogRecord>,
    pub rollouts: Vec<RolloutSummary>,
    pub reference: SoftmaxTable,
    pub policy: SoftmaxTable,
}

impl TrainingLog {
    pub fn evals(&self) -> impl Iterator<Item = &EvalRecord> {
        self.records.iter().filter_map(|r| match r {
            LogRecord::Eval(e) => Some(e),
            _ => None,
        })
    }

    pub fn steps(&self) -> impl Iterator<Item = &StepRecord> {
        self.records.iter().filter_map(|r| match r {
            LogRecord::Step(s) => Some(s),
            _ => None,
        })
    }
}

/// SplitMix64 finalizer; derives independent stream seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn stream(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix(seed), |acc, p| mix(acc ^ p))
}

fn episode_config(config: &GrpoConfig) -> EpisodeConfig {
    EpisodeConfig {
        max_turns: config.max_turns,
        token_budget: config.token_budget,
    }
}

/// Runs `config.group_size` independent episodes on one case and attaches
/// rewards and group-standardized advantages.
pub fn sample_group(
    table: &SoftmaxTable,
    env: &ToyEnvironment,
    case: usize,
    config: &GrpoConfig,
    seed: u64,
) -> Result<GroupBatch, GrpoError> {
    let c = env
        .cases
        .get(case)
        .ok_or_else(|| GrpoError::Config(format!("case {case} does not exist")))?;
    let ep = episode_config(config);
    let results: Vec<Result<(crate::episode::Trajectory, f64), GrpoError>> = (0..config.group_size)
        .into_par_iter()
        .map(|g| {
            let mut policy = ToyPolicy {
                table,
                profile: &env.profile,
                temperature: config.temperature,
                rng: ChaCha8Rng::seed_from_u64(stream(seed, &[g as u64])),
            };
            let t = run_episode(&mut policy, &env.index, &c.prompt, &ep)?;
            let r = env.score(&t, c)?.total;
            Ok((t, r))
        })
        .collect();
    let mut trajectories = Vec::with_capacity(results.len());
    let mut rewards = Vec::with_capacity(results.len());
    for r in results {
        let (t, reward) = r?;
        trajectories.push(t);
        rewards.push(reward);
    }
    let advantages = group_advantages(&rewards, config.advantage_epsilon);
    Ok(GroupBatch {
        case,
        trajectories,
        rewards,
        advantages,
    })
}

/// Samples every case `config.eval_samples` times under a fixed seed.
pub fn evaluate_policy(
    table: &SoftmaxTable,
    env: &ToyEnvironment,
    config: &GrpoConfig,
    seed: u64,
    step: usize,
) -> Result<EvalRecord, GrpoError> {
    let ep = episode_config(config);
    let jobs: Vec<(usize, usize)> =
        (0..env.cases.len()).flat_map(|c| (0..config.eval_samples).map(move |s| (c, s))).collect();
    let outcomes: Vec<Result<(CaseKind, usize, usize, f64, bool), GrpoError>> = jobs
        .par_iter()
        .map(|&(c, s)| {
            let case = &env.cases[c];
            let mut policy = ToyPolicy {
                table,
                profile: &env.profile,
                temperature: config.temperature,
                rng: ChaCha8Rng::seed_from_u64(stream(seed, &[u64::MAX, c as u64, s as u64])),
            };
            let t = run_episode(&mut policy, &env.index, &case.prompt, &ep)?;
            let r = env.score(&t, case)?.total;
            Ok((case.kind, t.stats.retrieval_calls, t.stats.generated_tokens, r, t.parse_ok))
        })
        .collect();
    let (mut reward, mut calls, mut tokens, mut failures) = (0.0, 0usize, 0usize, 0usize);
    let (mut ans_n, mut ans_ret, mut mem_n, mut mem_ret) = (0usize, 0usize, 0usize, 0usize);
    for o in outcomes {
        let (kind, c, t, r, ok) = o?;
        reward += r;
        calls += c;
        tokens += t;
        failures += usize::from(!ok);
        if kind.needs_retrieval() {
            mem_n += 1;
            mem_ret += usize::from(c > 0);
        } else {
            ans_n += 1;
            ans_ret += usize::from(c > 0);
        }
    }
    let n = jobs.len().max(1) as f64;
    let rate = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(EvalRecord {
        step,
        episodes: jobs.len(),
        mean_reward: reward / n,
        mean_retrieval_calls: calls as f64 / n,
        mean_generated_tokens: tokens as f64 / n,
        retrieval_rate_answerable: rate(ans_ret, ans_n),
        retrieval_rate_memory: rate(mem_ret, mem_n),
        parse_failure_rate: failures as f64 / n,
    })
}

/// Trains the toy policy from the tool-biased reference with GRPO.
pub fn train_toy(spec: &ToyEnvSpec, config: &GrpoConfig, seed: u64) -> Result<TrainingLog, GrpoError> {
    config.validate()?;
    if config.temperature <= 0.0 {
        return Err(GrpoError::Config("training needs a positive temperature".into()));
    }
    let env = ToyEnvironment::build(spec)?;
    train_in(&env, config, seed)
}

pub(crate) fn train_in(env: &ToyEnvironment, config: &GrpoConfig, seed: u64) -> Result<TrainingLog, GrpoError> {
    let reference = ToyEnvironment::initial_table(config.tool_bias);
    let mut policy = reference.clone();
    let eval_seed = stream(seed, &[0xe7a1]);
    let mut log = TrainingLog {
        records: vec![LogRecord::Eval(evaluate_policy(&policy, env, config, eval_seed, 0)?)],
        rollouts: Vec::new(),
        reference: reference.clone(),
        policy: policy.clone(),
    };
    let mut picker = ChaCha8Rng::seed_from_u64(stream(seed, &[0xca5e]));
    let per_step = config.prompts_per_step.min(env.cases.len());
    for step in 1..=config.steps {
        let mut cases: Vec<usize> = sample(&mut picker, env.cases.len(), per_step).into_vec();
        cases.sort_unstable();
        let batches = cases
            .iter()
            .enumerate()
            .map(|(slot, &c)| sample_group(&policy, env, c, config, stream(seed, &[step as u64, slot as u64])))
            .collect::<Result<Vec<_>, _>>()?;
        for b in &batches {
            for (t, r) in b.trajectories.iter().zip(&b.rewards) {
                log.rollouts.push(RolloutSummary {
                    step,
                    case: b.case,
                    kind: env.cases[b.case].kind,
                    retrieval_calls: t.stats.retrieval_calls,
                    generated_tokens: t.stats.generated_tokens,
                    reward: *r,
                    parse_ok: t.parse_ok,
                });
            }
        }
        let stats = match grpo_step(&mut policy, &reference, &batches, config) {
            Ok(s) => s,
            Err(e) => {
                log::error!("step {step} rejected: {e}");
                log.policy = policy;
                return Err(GrpoError::Divergence { step, log: Box::new(log) });
            }
        };
        if !stats.mean_reward.is_finite() {
            log.policy = policy;
            return Err(GrpoError::Divergence { step, log: Box::new(log) });
        }
        log.records.push(LogRecord::Step(StepRecord {
            step,
            mean_reward: stats.mean_reward,
            mean_kl: stats.mean_kl,
            clip_fraction: stats.clip_fraction,
            mean_retrieval_calls: stats.mean_retrieval_calls,
            mean_generated_tokens: stats.mean_generated_tokens,
        }));
        if config.eval_every > 0 && (step % config.eval_every == 0 || step == config.steps) {
            log.records.push(LogRecord::Eval(evaluate_policy(&policy, env, config, eval_seed, step)?));
        }
    }
    log.policy = policy;
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_steps_logs_initial_eval_only() {
        let cfg = GrpoConfig { steps: 0, eval_samples: 1, ..GrpoConfig::default() };
        let log = train_toy(&ToyEnvSpec::default(), &cfg, 1).unwrap();
        assert_eq!(log.records.len(), 1);
        assert!(matches!(log.records[0], LogRecord::Eval(EvalRecord { step: 0, .. })));
        assert_eq!(log.policy, log.reference);
    }

    #[test]
    fn same_seed_same_log() {
        let cfg = GrpoConfig { steps: 15, eval_every: 5, eval_samples: 1, ..GrpoConfig::default() };
        let a = train_toy(&ToyEnvSpec::default(), &cfg, 9).unwrap();
        let b = train_toy(&ToyEnvSpec::default(), &cfg, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.steps().count(), 15);
        assert_eq!(a.evals().count(), 4);
    }

    #[test]
    fn greedy_groups_are_identical() {
        let env = ToyEnvironment::build(&ToyEnvSpec::default()).unwrap();
        let cfg = GrpoConfig { temperature: 0.0, ..GrpoConfig::default() };
        let table = ToyEnvironment::initial_table(1.5);
        let g = sample_group(&table, &env, 3, &cfg, 42).unwrap();
        assert_eq!(g.trajectories.len(), 8);
        assert!(g.trajectories.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(g.advantages, vec![0.0; 8]);
        let cfg = GrpoConfig::default();
        assert_eq!(sample_group(&table, &env, 3, &cfg, 42).unwrap(), sample_group(&table, &env, 3, &cfg, 42).unwrap());
    }

    #[test]
    fn config_validation() {
        assert!(GrpoConfig::default().validate().is_ok());
        assert!(GrpoConfig { group_size: 1, ..GrpoConfig::default() }.validate().is_err());
        assert!(GrpoConfig { clip_eps: 1.0, ..GrpoConfig::default() }.validate().is_err());
        assert!(GrpoConfig { kl_coeff: -0.1, ..GrpoConfig::default() }.validate().is_err());
    }
}
