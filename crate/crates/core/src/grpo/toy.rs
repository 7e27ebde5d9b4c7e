//! A synthetic recommendation environment and a tabular policy that acts in it.
//!
//! Half of the prompts end in consecutive volumes of a series, so the next
//! volume can be read off the prompt. The other half end in a standalone title
//! whose successor is only recorded in memory: either inside another user's
//! history or as an "Often Read After" field on the successor's metadata.

use std::sync::Arc;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::table::SoftmaxTable;
use super::GrpoError;
use crate::corpus::{render_collab_doc, render_meta_doc, DocKind, MemoryDocument};
use crate::dataset::{ItemCatalog, ItemRecord};
use crate::episode::{
    render_prompt, Decision, EpisodeContext, EpisodePrompt, Generation, Policy, PolicyError, Trajectory,
};
use crate::grounding::{ground, reward, RewardBreakdown, RewardConfig, TitleIndex};
use crate::index::FlatIndex;
use crate::profile::{AblationFlags, DatasetProfile, MetaField};
use crate::embedding::HashEmbedder;

pub const THINK: usize = 0;
pub const CALL_COLLAB: usize = 1;
pub const CALL_META: usize = 2;
pub const ANSWER_NEXT_VOLUME: usize = 3;
pub const ANSWER_CANDIDATE: usize = 4;
pub const N_ACTIONS: usize = 5;
/// Two opening states (series pattern or not) plus four post-retrieval states
/// (candidate found or not, by last tool used).
pub const N_STATES: usize = 6;

const RELATED_KEY: &str = "often_read_after";
const RELATED_LABEL: &str = "Often Read After";

const ADJECTIVES: [&str; 30] = [
    "Quiet", "Copper", "Hollow", "Velvet", "Scarlet", "Frozen", "Gilded", "Restless", "Silent", "Broken", "Amber",
    "Wandering", "Hidden", "Burning", "Distant", "Crimson", "Paper", "Winter", "Iron", "Glass", "Salt", "Midnight",
    "Painted", "Wild", "Sunken", "Lunar", "Northern", "Bitter", "Golden", "Ashen",
];
const NOUNS: [&str; 30] = [
    "Harbor", "Lantern", "Orchard", "Meridian", "Cathedral", "Tundra", "Compass", "Falcon", "Archive", "Bridge",
    "Citadel", "Prairie", "Labyrinth", "Comet", "Monsoon", "Garden", "Kingdom", "Voyage", "Anthem", "Riddle",
    "Canyon", "Fortress", "Mirror", "Glacier", "Sparrow", "Tapestry", "Ember", "Horizon", "Legacy", "Quarry",
];
const SERIES: [&str; 8] = ["Dragonfall", "Starwind", "Nightshade", "Thornvale", "Moonforge", "Sablecrest", "Duskmere", "Brightwater"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyEnvSpec {
    pub n_users: usize,
    pub n_items: usize,
    pub n_series: usize,
    pub volumes: usize,
    /// Prompts answerable from the prompt alone.
    pub pattern_fraction: f64,
    /// Distinct planted (last title, successor) pairs per memory kind.
    pub planted_pairs: usize,
    /// Collaborative documents that carry no planted pair.
    pub filler_histories: usize,
    pub seed: u64,
}

impl Default for ToyEnvSpec {
    fn default() -> Self {
        Self {
            n_users: 100,
            n_items: 50,
            n_series: 5,
            volumes: 4,
            pattern_fraction: 0.5,
            planted_pairs: 10,
            filler_histories: 40,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseKind {
    /// Answerable from the prompt.
    Pattern,
    /// Successor planted in a collaborative document.
    Collaborative,
    /// Successor planted in a metadata document.
    Meta,
}

impl CaseKind {
    pub fn needs_retrieval(self) -> bool {
        self != CaseKind::Pattern
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyCase {
    pub user_id: String,
    pub prompt: EpisodePrompt,
    pub target_item: String,
    pub kind: CaseKind,
}

pub struct ToyEnvironment {
    pub spec: ToyEnvSpec,
    pub profile: DatasetProfile,
    pub catalog: ItemCatalog,
    pub corpus: Vec<MemoryDocument>,
    pub index: FlatIndex,
    pub titles: TitleIndex,
    pub cases: Vec<ToyCase>,
    pub reward_config: RewardConfig,
}

impl std::fmt::Debug for ToyEnvironment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ToyEnvironment")
            .field("cases", &self.cases.len())
            .field("items", &self.catalog.len())
            .field("docs", &self.corpus.len())
            .finish()
    }
}

pub fn toy_profile() -> DatasetProfile {
    let mut p = DatasetProfile::goodreads();
    p.name = "toy".into();
    p.meta_fields.push(MetaField::new(RELATED_KEY, RELATED_LABEL));
    p
}

fn series_title(stem: &str, volume: usize) -> String {
    format!("{stem} {volume}")
}

/// Splits `Stem 3` into (`Stem`, 3).
pub fn split_volume(title: &str) -> Option<(&str, usize)> {
    let (stem, num) = title.rsplit_once(' ')?;
    Some((stem, num.parse().ok()?))
}

/// Whether the history ends in two consecutive volumes of one series.
pub fn ends_in_series(titles: &[String]) -> bool {
    match titles {
        [.., a, b] => match (split_volume(a), split_volume(b)) {
            (Some((sa, va)), Some((sb, vb))) => sa == sb && va + 1 == vb,
            _ => false,
        },
        _ => false,
    }
}

/// Next volume after the last title, or the last title itself.
pub fn next_volume_guess(titles: &[String]) -> String {
    let last = titles.last().cloned().unwrap_or_default();
    match split_volume(&last) {
        Some((stem, v)) => series_title(stem, v + 1),
        None => last,
    }
}

pub fn collab_query(last: &str) -> String {
    format!("User History: [{last}]")
}

pub fn meta_query(last: &str) -> String {
    format!("Find metadata {RELATED_LABEL}: {last}")
}

/// Reads a successor of `last` out of a retrieved passage.
pub fn candidate_from_passage(passage: &str, last: &str, profile: &DatasetProfile) -> Option<String> {
    if let Some(open) = passage.find("History: [") {
        let body = passage[open + "History: [".len()..].trim_end().trim_end_matches("</tool_response>").trim_end();
        let body = body.strip_suffix(']').unwrap_or(body);
        let titles: Vec<&str> = body.split(", ").map(str::trim).collect();
        let at = titles.iter().position(|t| *t == last)?;
        return titles.get(at + 1).map(|t| t.to_string());
    }
    let marker = format!("{RELATED_LABEL}: {last}");
    let after = passage.find(&marker).map(|i| &passage[i + marker.len()..])?;
    let rest = after.trim_start();
    if !(rest.is_empty() || rest.starts_with(';') || rest.starts_with('<')) {
        return None;
    }
    let head = format!("{}: ", profile.entity_label);
    let start = passage.find(&head)? + head.len();
    let end = passage[start..].find(';').map_or(passage.len(), |e| start + e);
    Some(passage[start..end].trim().to_string())
}

impl ToyEnvironment {
    pub fn build(spec: &ToyEnvSpec) -> Result<Self, GrpoError> {
        let series_items = spec.n_series * spec.volumes;
        let standalone = spec.n_items.saturating_sub(series_items);
        if spec.n_series > SERIES.len() || standalone > ADJECTIVES.len() || spec.volumes < 3 {
            return Err(GrpoError::Config("toy spec outside the built-in vocabulary".into()));
        }
        if standalone < 3 * spec.planted_pairs || spec.planted_pairs == 0 {
            return Err(GrpoError::Config("not enough standalone items for the planted pairs".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let profile = toy_profile();

        let mut adjectives = ADJECTIVES.to_vec();
        let mut nouns = NOUNS.to_vec();
        adjectives.shuffle(&mut rng);
        nouns.shuffle(&mut rng);
        let standalone_titles: Vec<String> =
            (0..standalone).map(|k| format!("{} {}", adjectives[k], nouns[k])).collect();

        let genres = ["Fantasy", "Mystery", "Romance", "Biography", "Poetry"];
        let mut items: Vec<ItemRecord> = Vec::new();
        let mut id_of = std::collections::HashMap::new();
        for s in 0..spec.n_series {
            for v in 1..=spec.volumes {
                let id = format!("b{:03}", items.len());
                let title = series_title(SERIES[s], v);
                id_of.insert(title.clone(), id.clone());
                items.push(
                    ItemRecord::new(id, title)
                        .with_field("author", format!("Author {}", s + 1))
                        .with_field("genres", genres[s % genres.len()])
                        .with_field("series", SERIES[s]),
                );
            }
        }
        let p = spec.planted_pairs;
        for (k, title) in standalone_titles.iter().enumerate() {
            let id = format!("b{:03}", items.len());
            id_of.insert(title.clone(), id.clone());
            let mut item = ItemRecord::new(id, title.clone())
                .with_field("author", format!("Writer {}", k + 1))
                .with_field("genres", genres[(k + 2) % genres.len()]);
            if (2 * p..3 * p).contains(&k) {
                item = item.with_field(RELATED_KEY, standalone_titles[k - p].clone());
            }
            items.push(item);
        }
        let catalog: ItemCatalog = items.into_iter().collect();

        // Pair j of the collaborative kind: standalone j -> standalone p + j.
        // Pair j of the meta kind: standalone p + j -> standalone 2p + j.
        let mut corpus = Vec::new();
        let fillers: Vec<&String> = standalone_titles[2 * p..].iter().collect();
        for j in 0..p {
            let mut history: Vec<String> = fillers.choose_multiple(&mut rng, 2).map(|t| t.to_string()).collect();
            history.push(standalone_titles[j].clone());
            history.push(standalone_titles[p + j].clone());
            corpus.push((DocKind::Collaborative, format!("m{j}"), render_collab_doc(&format!("m{j}"), &history)));
        }
        let mut series_pool: Vec<String> =
            (0..spec.n_series).flat_map(|s| (1..=spec.volumes).map(move |v| series_title(SERIES[s], v))).collect();
        series_pool.extend(standalone_titles[2 * p..].iter().cloned());
        for f in 0..spec.filler_histories {
            let history: Vec<String> = series_pool.choose_multiple(&mut rng, 5).cloned().collect();
            let uid = format!("f{f}");
            let text = render_collab_doc(&uid, &history);
            corpus.push((DocKind::Collaborative, uid, text));
        }
        for item in catalog.iter() {
            corpus.push((DocKind::Meta, item.item_id.clone(), Ok(render_meta_doc(item, &profile.entity_label, &profile.meta_fields))));
        }
        let corpus: Vec<MemoryDocument> = corpus
            .into_iter()
            .enumerate()
            .map(|(doc_id, (kind, source_ref, text))| -> Result<MemoryDocument, GrpoError> {
                Ok(MemoryDocument {
                    doc_id,
                    kind,
                    source_ref,
                    text: text.map_err(|e| GrpoError::Config(e.to_string()))?,
                })
            })
            .collect::<Result<_, _>>()?;

        let embedder: Arc<dyn crate::embedding::Embedder> = Arc::new(HashEmbedder::default());
        let index = FlatIndex::build(corpus.clone(), Arc::clone(&embedder)).map_err(|e| GrpoError::Config(e.to_string()))?;
        let titles = TitleIndex::build(&catalog, embedder).map_err(|e| GrpoError::Config(e.to_string()))?;

        let n_pattern = (spec.n_users as f64 * spec.pattern_fraction).round() as usize;
        let n_collab = (spec.n_users - n_pattern) / 2;
        let mut cases = Vec::with_capacity(spec.n_users);
        for u in 0..spec.n_users {
            let (kind, history, target) = if u < n_pattern {
                let s = u % spec.n_series;
                let end = 2 + (u / spec.n_series) % (spec.volumes - 2);
                let mut history: Vec<String> = fillers.choose_multiple(&mut rng, 2).map(|t| t.to_string()).collect();
                history.extend((1..=end).map(|v| series_title(SERIES[s], v)));
                (CaseKind::Pattern, history, series_title(SERIES[s], end + 1))
            } else {
                let collab = u < n_pattern + n_collab;
                let j = u % p;
                let (last, target) = if collab {
                    (&standalone_titles[j], &standalone_titles[p + j])
                } else {
                    (&standalone_titles[p + j], &standalone_titles[2 * p + j])
                };
                let pool: Vec<&String> = fillers.iter().copied().filter(|t| *t != target).collect();
                let mut history: Vec<String> = pool.choose_multiple(&mut rng, 2).map(|t| t.to_string()).collect();
                history.push(last.clone());
                let kind = if collab { CaseKind::Collaborative } else { CaseKind::Meta };
                (kind, history, target.clone())
            };
            let prompt = render_prompt(&history, &profile, AblationFlags::NONE).map_err(|e| GrpoError::Config(e.to_string()))?;
            cases.push(ToyCase {
                user_id: format!("u{u:03}"),
                prompt,
                target_item: id_of[&target].clone(),
                kind,
            });
        }
        // Keep the shuffle independent of the rest of the construction.
        let mut order: Vec<usize> = (0..cases.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed));
        let cases = order.into_iter().map(|k| cases[k].clone()).collect();

        Ok(Self {
            spec: spec.clone(),
            profile,
            catalog,
            corpus,
            index,
            titles,
            cases,
            reward_config: RewardConfig::default(),
        })
    }

    /// Reward of a finished episode against its case.
    pub fn score(&self, trajectory: &Trajectory, case: &ToyCase) -> Result<RewardBreakdown, GrpoError> {
        let answer = if trajectory.parse_ok { trajectory.answer_text.as_deref() } else { None };
        let candidates = ground(answer, &self.titles, self.reward_config.max_cutoff())
            .map_err(|e| GrpoError::Config(e.to_string()))?;
        Ok(reward(&candidates, &case.target_item, trajectory.parse_ok, &self.reward_config))
    }

    /// The opening-plus-retrieval table the reference policy starts from:
    /// uniform except for a bias toward both tool calls.
    pub fn initial_table(tool_bias: f64) -> SoftmaxTable {
        SoftmaxTable::zeros(N_STATES, N_ACTIONS)
            .with_action_bias(CALL_COLLAB, tool_bias)
            .with_action_bias(CALL_META, tool_bias)
    }
}

/// Samples templated emissions from a [`SoftmaxTable`].
///
/// The first token of each emission carries the action's log-probability; the
/// remaining template tokens are deterministic and carry log-probability zero.
pub struct ToyPolicy<'a, R> {
    pub table: &'a SoftmaxTable,
    pub profile: &'a DatasetProfile,
    pub temperature: f64,
    pub rng: R,
}

/// Maps an episode context to its table state.
pub fn toy_state(ctx: &EpisodeContext<'_>, profile: &DatasetProfile) -> (usize, Option<String>) {
    let titles = &ctx.prompt.history_titles;
    let Some(response) = ctx.last_tool_response else {
        return (usize::from(ends_in_series(titles)), None);
    };
    let last = titles.last().map(String::as_str).unwrap_or("");
    let candidate = candidate_from_passage(response, last, profile);
    let last_call = ctx.transcript.rfind("<tool_call>").map(|i| &ctx.transcript[i..]).unwrap_or("");
    let used_meta = last_call.contains(RELATED_LABEL);
    (2 + 2 * usize::from(candidate.is_some()) + usize::from(used_meta), candidate)
}

fn with_logprob(text: String, decision: Decision) -> Generation {
    let n = text.split_whitespace().count();
    let mut lp = vec![0.0; n];
    if n > 0 {
        lp[0] = decision.logprob;
    }
    Generation {
        text,
        token_logprobs: Some(lp),
        num_tokens: None,
        decision: Some(decision),
    }
}

impl<R: Rng> Policy for ToyPolicy<'_, R> {
    fn generate(&mut self, ctx: &EpisodeContext<'_>) -> Result<Generation, PolicyError> {
        let (state, candidate) = toy_state(ctx, self.profile);
        let (action, logprob) = self.table.sample(state, self.temperature, &mut self.rng);
        let titles = &ctx.prompt.history_titles;
        let last = titles.last().cloned().unwrap_or_default();
        let text = match action {
            THINK => "<think> Weigh the history against the evidence so far. </think>".to_string(),
            CALL_COLLAB => format!("<tool_call> {} </tool_call>", collab_query(&last)),
            CALL_META => format!("<tool_call> {} </tool_call>", meta_query(&last)),
            ANSWER_NEXT_VOLUME => format!("<answer> \"{}\" </answer>", next_volume_guess(titles)),
            ANSWER_CANDIDATE => format!("<answer> \"{}\" </answer>", candidate.unwrap_or(last)),
            other => return Err(PolicyError::Other(format!("action {other} outside the toy vocabulary"))),
        };
        Ok(with_logprob(text, Decision { state, action, logprob }))
    }
}
