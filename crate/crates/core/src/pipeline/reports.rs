//! Episode fan-out, evaluation tables and behavior statistics.

use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::corpus::{corpus_digest, MemoryDocument};
use crate::dataset::{long_tail_slice, ItemCatalog, NextItemExample};
use crate::episode::{render_prompt, run_episode, EpisodeConfig, Policy, Trajectory};
use crate::grounding::{ground, reward, RewardConfig, TitleIndex};
use crate::index::FlatIndex;
use crate::metrics::{metric_rows, MetricRow};
use crate::profile::{AblationFlags, DatasetProfile};

/// Builds a fresh policy for one example. The second argument is a per-example
/// seed derived from the run seed.
pub type PolicyFactory<'a> = dyn Fn(&NextItemExample, u64) -> Box<dyn Policy + Send> + Sync + 'a;

#[derive(Debug, Clone)]
pub struct EpisodeOptions {
    pub episode: EpisodeConfig,
    /// Most recent history titles shown in the prompt.
    pub max_prompt_titles: usize,
    pub seed: u64,
}

impl Default for EpisodeOptions {
    fn default() -> Self {
        Self {
            episode: EpisodeConfig::default(),
            max_prompt_titles: 50,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub split: String,
    pub user_id: String,
    pub position: usize,
    pub target_item: String,
    pub trajectory: Trajectory,
}

fn example_seed(seed: u64, ex: &NextItemExample) -> u64 {
    let digest = crate::dataset::sha256_hex(format!("{seed}:{}:{}", ex.user_id, ex.position).as_bytes());
    u64::from_str_radix(&digest[..16], 16).expect("hex digest")
}

/// Runs one episode per example, in parallel on the current rayon pool; output
/// order follows input order.
#[allow(clippy::too_many_arguments)]
pub fn run_episodes(
    split: &str,
    examples: &[NextItemExample],
    catalog: &ItemCatalog,
    profile: &DatasetProfile,
    ablation: AblationFlags,
    index: &FlatIndex,
    make_policy: &PolicyFactory<'_>,
    options: &EpisodeOptions,
) -> Result<Vec<EpisodeRecord>, PipelineError> {
    examples
        .par_iter()
        .map(|ex| {
            let titles = catalog.titles_for(ex.prefix.iter().map(|r| r.item_id.as_str()));
            let start = titles.len().saturating_sub(options.max_prompt_titles.max(1));
            let prompt = render_prompt(&titles[start..], profile, ablation)
                .map_err(|e| PipelineError::Config(format!("user {}: {e}", ex.user_id)))?;
            let mut policy = make_policy(ex, example_seed(options.seed, ex));
            let trajectory = run_episode(&mut policy, index, &prompt, &options.episode)?;
            Ok(EpisodeRecord {
                split: split.to_string(),
                user_id: ex.user_id.clone(),
                position: ex.position,
                target_item: ex.target.item_id.clone(),
                trajectory,
            })
        })
        .collect()
}

/// One graded test case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub split: String,
    pub user_id: String,
    pub position: usize,
    pub target_item: String,
    pub answer: Option<String>,
    pub parse_ok: bool,
    pub rank: Option<usize>,
    pub reward: f64,
    pub retrieval_calls: usize,
    pub generated_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<MetricRow>,
    pub cases: Vec<CaseRecord>,
    /// Number of cases in the long-tail slice, when requested.
    pub long_tail_cases: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub cutoffs: Vec<usize>,
    pub grounding_n: usize,
    pub reward: RewardConfig,
    /// Item frequencies over the full dataset and the bottom quantile to slice.
    pub long_tail: Option<(HashMap<String, usize>, f64)>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            cutoffs: vec![5, 10],
            grounding_n: 100,
            reward: RewardConfig::default(),
            long_tail: None,
        }
    }
}

/// Grounds finished episodes and tabulates HR@N / NDCG@N, plus the long-tail
/// slice when configured.
pub fn grade_episodes(
    records: &[EpisodeRecord],
    examples: &[NextItemExample],
    titles: &TitleIndex,
    options: &EvalOptions,
) -> Result<EvalReport, PipelineError> {
    let cases = records
        .par_iter()
        .map(|r| {
            let t = &r.trajectory;
            let answer = if t.parse_ok { t.answer_text.as_deref() } else { None };
            let candidates = ground(answer, titles, options.grounding_n)?;
            let br = reward(&candidates, &r.target_item, t.parse_ok, &options.reward);
            Ok(CaseRecord {
                split: r.split.clone(),
                user_id: r.user_id.clone(),
                position: r.position,
                target_item: r.target_item.clone(),
                answer: t.answer_text.clone(),
                parse_ok: t.parse_ok,
                rank: br.rank_of_truth,
                reward: br.total,
                retrieval_calls: t.stats.retrieval_calls,
                generated_tokens: t.stats.generated_tokens,
            })
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    let split = records.first().map_or("test", |r| r.split.as_str());
    let ranks: Vec<Option<usize>> = cases.iter().map(|c| c.rank).collect();
    let mut rows = metric_rows(split, &ranks, &options.cutoffs);
    let mut long_tail_cases = None;
    if let Some((freq, q)) = &options.long_tail {
        let slice = long_tail_slice(examples, freq, *q)?;
        let keep: BTreeSet<(&str, usize)> = slice.iter().map(|e| (e.user_id.as_str(), e.position)).collect();
        let tail: Vec<Option<usize>> = cases
            .iter()
            .filter(|c| keep.contains(&(c.user_id.as_str(), c.position)))
            .map(|c| c.rank)
            .collect();
        long_tail_cases = Some(tail.len());
        rows.extend(metric_rows(&format!("{split}_long_tail"), &tail, &options.cutoffs));
    }
    Ok(EvalReport {
        rows,
        cases,
        long_tail_cases,
    })
}

/// Refuses an index that was not built from `corpus`.
pub fn check_index(index: &FlatIndex, corpus: &[MemoryDocument]) -> Result<(), PipelineError> {
    let given = corpus_digest(corpus);
    if index.corpus_digest() != given {
        return Err(PipelineError::ManifestMismatch {
            index: index.corpus_digest().to_string(),
            corpus: given,
        });
    }
    Ok(())
}

/// Runs and grades episodes over `examples`.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    examples: &[NextItemExample],
    corpus: &[MemoryDocument],
    index: &FlatIndex,
    catalog: &ItemCatalog,
    titles: &TitleIndex,
    profile: &DatasetProfile,
    ablation: AblationFlags,
    make_policy: &PolicyFactory<'_>,
    episode_options: &EpisodeOptions,
    eval_options: &EvalOptions,
) -> Result<EvalReport, PipelineError> {
    check_index(index, corpus)?;
    let records = run_episodes("test", examples, catalog, profile, ablation, index, make_policy, episode_options)?;
    grade_episodes(&records, examples, titles, eval_options)
}

/// Anything that contributes to behavior statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BehaviorSample {
    pub step: usize,
    pub retrieval_calls: usize,
    pub generated_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorPoint {
    pub window: usize,
    pub first_step: usize,
    pub last_step: usize,
    pub episodes: usize,
    pub avg_retrieval_calls: f64,
    pub avg_generated_tokens: f64,
}

/// Buckets samples into windows of `window_size` consecutive steps (step `s`
/// lands in window `(s - 1) / window_size`, step 0 in window 0) and averages
/// each window.
pub fn behavior_stats(samples: &[BehaviorSample], window_size: usize) -> Result<Vec<BehaviorPoint>, PipelineError> {
    if window_size == 0 {
        return Err(PipelineError::Config("window size must be at least 1".into()));
    }
    let mut buckets: std::collections::BTreeMap<usize, (usize, usize, usize, usize, usize)> = Default::default();
    for s in samples {
        let w = s.step.saturating_sub(1) / window_size;
        let e = buckets.entry(w).or_insert((usize::MAX, 0, 0, 0, 0));
        e.0 = e.0.min(s.step);
        e.1 = e.1.max(s.step);
        e.2 += 1;
        e.3 += s.retrieval_calls;
        e.4 += s.generated_tokens;
    }
    Ok(buckets
        .into_iter()
        .map(|(window, (first, last, n, calls, tokens))| BehaviorPoint {
            window,
            first_step: first,
            last_step: last,
            episodes: n,
            avg_retrieval_calls: calls as f64 / n as f64,
            avg_generated_tokens: tokens as f64 / n as f64,
        })
        .collect())
}

/// Provenance of one command invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_digest: String,
    pub seed: u64,
    pub profile: String,
    pub ablation: AblationFlags,
    pub corpus_digest: Option<String>,
    pub index_digest: Option<String>,
    /// Earliest and latest interaction timestamps in the data, not wall-clock time.
    pub data_time_range: Option<(i64, i64)>,
    pub sft_warmup_ratio: Option<f64>,
    /// Artifact path relative to the output directory, with its SHA-256.
    pub artifacts: Vec<(String, String)>,
}
