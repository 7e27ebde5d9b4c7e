//! The command set behind the `memrec` binary. Every command reads a
//! [`RunConfig`], writes its outputs under one directory and returns the
//! manifest it recorded there.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;

use super::config::RunConfig;
use super::reports::{
    behavior_stats, check_index, grade_episodes, run_episodes, BehaviorSample, EpisodeOptions, EpisodeRecord,
    EvalOptions, PolicyFactory, RunManifest,
};
use super::PipelineError;
use crate::corpus::{build_corpus, corpus_digest, read_corpus, write_corpus, CorpusConfig, MemoryDocument};
use crate::dataset::{
    filter_min_history, ingest_interactions, item_frequency, read_catalog, read_interactions, sha256_hex, ItemCatalog,
    NextItemExample, SplitBundle, SplitConfig,
};
use crate::embedding::{load_external_vectors, Embedder, HashEmbedder, RemoteEmbedder, EMBED_ENDPOINT_ENV};
use crate::episode::{read_jsonl, write_jsonl, CollaborativeHeuristic, EpisodeConfig, Policy, RemotePolicy};
use crate::grounding::TitleIndex;
use crate::grpo::toy::ToyEnvSpec;
use crate::grpo::{train_toy, GrpoConfig, PolicySnapshot, Role};
use crate::index::FlatIndex;
use crate::profile::{AblationFlags, DatasetProfile};

pub const DATA_DIR: &str = "data";
pub const CATALOG_FILE: &str = "catalog.jsonl";
pub const FREQUENCY_FILE: &str = "item_frequency.json";
pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const INDEX_FILE: &str = "index.bin";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, bytes).map_err(io_err(path))
}

fn jsonl_bytes<T: Serialize>(records: &[T]) -> Result<Vec<u8>, PipelineError> {
    let mut buf = Vec::new();
    write_jsonl(&mut buf, records).map_err(|source| PipelineError::Io {
        path: "<buffer>".into(),
        source,
    })?;
    Ok(buf)
}

fn read_records<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    read_jsonl(BufReader::new(f)).map_err(io_err(path))
}

/// Shared settings every command derives from the config.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: RunConfig,
    pub out: PathBuf,
    pub seed: u64,
    pub profile: DatasetProfile,
    pub ablation: AblationFlags,
}

impl Context {
    pub fn new(config: RunConfig, out: PathBuf) -> Result<Self, PipelineError> {
        let seed = config.require::<u64>("seed")?;
        let name = config.get("profile").unwrap_or("movielens");
        let profile =
            DatasetProfile::by_name(name).ok_or_else(|| PipelineError::Config(format!("unknown profile {name:?}")))?;
        let ablation = AblationFlags {
            without_cf: config.flag("without_cf")?,
            without_meta: config.flag("without_meta")?,
            without_re: config.flag("without_re")?,
        };
        Ok(Self {
            config,
            out,
            seed,
            profile,
            ablation,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn manifest(&self, command: &str) -> Result<RunManifest, PipelineError> {
        Ok(RunManifest {
            command: command.to_string(),
            config_digest: self.config.digest(),
            seed: self.seed,
            profile: self.profile.name.clone(),
            ablation: self.ablation,
            corpus_digest: None,
            index_digest: None,
            data_time_range: None,
            sft_warmup_ratio: self.config.get("sft_warmup_ratio").map(|v| v.parse()).transpose().map_err(
                |_| PipelineError::Config("`sft_warmup_ratio` must be a number".into()),
            )?,
            artifacts: Vec::new(),
        })
    }

    /// Writes `bytes` under the output directory and records it in `manifest`.
    fn emit(&self, manifest: &mut RunManifest, name: &str, bytes: &[u8]) -> Result<(), PipelineError> {
        write_file(&self.path(name), bytes)?;
        manifest.artifacts.push((name.to_string(), sha256_hex(bytes)));
        Ok(())
    }

    fn finish(&self, manifest: RunManifest) -> Result<RunManifest, PipelineError> {
        let text = serde_json::to_string_pretty(&manifest)?;
        write_file(&self.path(&format!("manifest.{}.json", manifest.command)), text.as_bytes())?;
        Ok(manifest)
    }

    /// Retrieval embedder: `embedder = hash | table | remote` with `embed_dim`,
    /// `embed_table` and `embed_endpoint`.
    pub fn embedder(&self) -> Result<Arc<dyn Embedder>, PipelineError> {
        self.embedder_slot("")
    }

    /// Grounding embedder: the same keys prefixed with `grounding_`, each
    /// falling back to the retrieval setting.
    pub fn grounding_embedder(&self) -> Result<Arc<dyn Embedder>, PipelineError> {
        self.embedder_slot("grounding_")
    }

    fn embedder_slot(&self, prefix: &str) -> Result<Arc<dyn Embedder>, PipelineError> {
        let key = |k: &str| {
            let own = format!("{prefix}{k}");
            if self.config.get(&own).is_some() {
                own
            } else {
                k.to_string()
            }
        };
        let dim = self.config.get_or(&key("embed_dim"), crate::embedding::DEFAULT_DIM)?;
        match self.config.get(&key("embedder")).unwrap_or("hash") {
            "hash" => Ok(Arc::new(HashEmbedder::new(dim))),
            "table" => {
                let path: PathBuf = self.config.require(&key("embed_table"))?;
                Ok(Arc::new(load_external_vectors(&path)?))
            }
            "remote" => {
                let url = self
                    .config
                    .get(&key("embed_endpoint"))
                    .map(str::to_string)
                    .or_else(|| std::env::var(EMBED_ENDPOINT_ENV).ok())
                    .ok_or_else(|| PipelineError::MissingKey(key("embed_endpoint")))?;
                Ok(Arc::new(RemoteEmbedder::new(url, dim)))
            }
            other => Err(PipelineError::Config(format!("unknown embedder {other:?}"))),
        }
    }

    fn episode_options(&self) -> Result<EpisodeOptions, PipelineError> {
        Ok(EpisodeOptions {
            episode: EpisodeConfig {
                max_turns: self.config.get_or("max_turns", 5)?,
                token_budget: self.config.get_or("token_budget", 4096)?,
            },
            max_prompt_titles: self.config.get_or("max_prompt_titles", 50)?,
            seed: self.seed,
        })
    }

    /// `policy = heuristic` (default) or `policy = remote`.
    pub fn policy_factory(&self) -> Result<Box<PolicyFactory<'static>>, PipelineError> {
        match self.config.get("policy").unwrap_or("heuristic") {
            "heuristic" => Ok(Box::new(|_: &NextItemExample, _| Box::new(CollaborativeHeuristic::default()) as Box<dyn Policy + Send>)),
            "remote" => {
                let temperature = self.config.get_or("temperature", 1.0)?;
                let url = self
                    .config
                    .get("policy_endpoint")
                    .map(str::to_string)
                    .or_else(|| std::env::var(crate::episode::POLICY_ENDPOINT_ENV).ok())
                    .ok_or_else(|| PipelineError::MissingKey("policy_endpoint".into()))?;
                let base = RemotePolicy::new(&url, temperature);
                Ok(Box::new(move |_: &NextItemExample, _| Box::new(base.clone()) as Box<dyn Policy + Send>))
            }
            other => Err(PipelineError::Config(format!("unknown policy {other:?}"))),
        }
    }

    fn load_catalog(&self) -> Result<ItemCatalog, PipelineError> {
        let rows = read_catalog(&self.path(DATA_DIR).join(CATALOG_FILE))?;
        Ok(rows.into_iter().collect())
    }

    fn load_bundle(&self) -> Result<SplitBundle, PipelineError> {
        Ok(SplitBundle::read_dir(&self.path(DATA_DIR))?)
    }

    fn load_corpus(&self) -> Result<Vec<MemoryDocument>, PipelineError> {
        Ok(read_corpus(&self.path(CORPUS_FILE))?)
    }

    fn load_index(&self, corpus: Vec<MemoryDocument>) -> Result<FlatIndex, PipelineError> {
        Ok(FlatIndex::load(&self.path(INDEX_FILE), corpus, self.embedder()?)?)
    }

    fn split<'b>(&self, bundle: &'b SplitBundle) -> Result<(&'static str, &'b [NextItemExample]), PipelineError> {
        match self.config.get("split").unwrap_or("test") {
            "test" => Ok(("test", &bundle.test)),
            "validation" | "val" => Ok(("validation", &bundle.validation)),
            "train" => Ok(("train", &bundle.train)),
            other => Err(PipelineError::Config(format!("unknown split {other:?}"))),
        }
    }
}

fn catalog_jsonl(catalog: &ItemCatalog) -> Result<Vec<u8>, PipelineError> {
    let rows: Vec<serde_json::Value> = catalog
        .iter()
        .map(|item| {
            let meta: serde_json::Map<String, serde_json::Value> =
                item.metadata.iter().map(|(k, v)| (k.clone(), v.clone().into())).collect();
            serde_json::json!({"item_id": item.item_id, "title": item.title, "metadata": meta})
        })
        .collect();
    jsonl_bytes(&rows)
}

/// Ingests, filters and splits the raw data.
pub fn build_data(ctx: &Context) -> Result<RunManifest, PipelineError> {
    let cfg = &ctx.config;
    let interactions: PathBuf = cfg.require("interactions")?;
    let catalog_path: PathBuf = cfg.require("catalog")?;
    let ingested = ingest_interactions(read_interactions(&interactions)?, read_catalog(&catalog_path)?)?;
    if ingested.dropped_unknown_items > 0 {
        log::warn!("dropped {} interactions with unknown items", ingested.dropped_unknown_items);
    }
    let histories = filter_min_history(ingested.histories, cfg.get_or("min_history", 10)?);
    let split_cfg = SplitConfig::new(ctx.seed)
        .with_sizes(cfg.get_or("n_train", 4096)?, cfg.get_or("n_val", 512)?, cfg.get_or("n_test", 1000)?)
        .with_memory_cap(cfg.get("memory_cap").map(|v| v.parse()).transpose().map_err(|_| {
            PipelineError::Config("`memory_cap` must be a count".into())
        })?)
        .with_look_ahead_guard(cfg.get_or("no_look_ahead", true)?);
    let bundle = crate::dataset::split_and_subsample(&histories, &split_cfg)?;

    let mut manifest = ctx.manifest("build-data")?;
    let data_dir = ctx.path(DATA_DIR);
    let split_manifest = bundle.write_dir(&data_dir)?;
    for (name, digest) in &split_manifest.digests {
        manifest.artifacts.push((format!("{DATA_DIR}/{name}"), digest.clone()));
    }
    ctx.emit(&mut manifest, &format!("{DATA_DIR}/{CATALOG_FILE}"), &catalog_jsonl(&ingested.catalog)?)?;
    let freq: std::collections::BTreeMap<String, usize> = item_frequency(&histories).into_iter().collect();
    ctx.emit(&mut manifest, &format!("{DATA_DIR}/{FREQUENCY_FILE}"), serde_json::to_string(&freq)?.as_bytes())?;
    let times = histories.iter().flat_map(|h| h.events.iter().map(|e| e.timestamp));
    manifest.data_time_range = times.clone().min().zip(times.max());
    ctx.finish(manifest)
}

pub fn build_corpus_cmd(ctx: &Context) -> Result<RunManifest, PipelineError> {
    let bundle = ctx.load_bundle()?;
    let catalog = ctx.load_catalog()?;
    let config = CorpusConfig {
        max_history_titles: ctx.config.get_or("max_history_titles", 50)?,
        exclude_example_users: ctx.config.get_or("exclude_example_users", true)?,
    };
    let docs = build_corpus(&bundle, &catalog, &ctx.profile, ctx.ablation, &config);
    let mut manifest = ctx.manifest("build-corpus")?;
    write_corpus(&ctx.path(CORPUS_FILE), &docs)?;
    let bytes = fs::read(ctx.path(CORPUS_FILE)).map_err(io_err(&ctx.path(CORPUS_FILE)))?;
    manifest.artifacts.push((CORPUS_FILE.into(), sha256_hex(&bytes)));
    manifest.corpus_digest = Some(corpus_digest(&docs));
    ctx.finish(manifest)
}

pub fn build_index_cmd(ctx: &Context) -> Result<RunManifest, PipelineError> {
    let docs = ctx.load_corpus()?;
    let digest = corpus_digest(&docs);
    let index = FlatIndex::build(docs, ctx.embedder()?)?;
    let path = ctx.path(INDEX_FILE);
    index.save(&path)?;
    let bytes = fs::read(&path).map_err(io_err(&path))?;
    let mut manifest = ctx.manifest("build-index")?;
    manifest.corpus_digest = Some(digest);
    manifest.index_digest = Some(sha256_hex(&bytes));
    manifest.artifacts.push((INDEX_FILE.into(), sha256_hex(&bytes)));
    ctx.finish(manifest)
}

fn episodes(ctx: &Context) -> Result<(Vec<EpisodeRecord>, SplitBundle, FlatIndex, ItemCatalog, String), PipelineError> {
    let bundle = ctx.load_bundle()?;
    let catalog = ctx.load_catalog()?;
    let corpus = ctx.load_corpus()?;
    let index = ctx.load_index(corpus.clone())?;
    check_index(&index, &corpus)?;
    let factory = ctx.policy_factory()?;
    let (split, examples) = ctx.split(&bundle)?;
    let records = run_episodes(split, examples, &catalog, &ctx.profile, ctx.ablation, &index, &*factory, &ctx.episode_options()?)?;
    Ok((records, bundle, index, catalog, split.to_string()))
}

pub fn run_episodes_cmd(ctx: &Context) -> Result<RunManifest, PipelineError> {
    let (records, _, index, _, _) = episodes(ctx)?;
    let mut manifest = ctx.manifest("run-episodes")?;
    manifest.corpus_digest = Some(index.corpus_digest().to_string());
    ctx.emit(&mut manifest, "trajectories.jsonl", &jsonl_bytes(&records)?)?;
    ctx.finish(manifest)
}

pub fn evaluate_cmd(ctx: &Context) -> Result<RunManifest, PipelineError> {
    let (records, bundle, index, catalog, split) = episodes(ctx)?;
    let mut titles = TitleIndex::build(&catalog, ctx.grounding_embedder()?)?;
    let quantile: f64 = ctx.config.get_or("long_tail_quantile", 0.2)?;
    let freq_path = ctx.path(DATA_DIR).join(FREQUENCY_FILE);
    let freq: HashMap<String, usize> =
        serde_json::from_str(&fs::read_to_string(&freq_path).map_err(io_err(&freq_path))?)?;
    let options = EvalOptions {
        cutoffs: ctx.config.list("cutoffs", &[5, 10])?,
        grounding_n: ctx.config.get_or("grounding_n", 100)?,
        long_tail: (quantile > 0.0).then_some((freq, quantile)),
        ..EvalOptions::default()
    };
    let examples: &[NextItemExample] = match split.as_str() {
        "validation" => &bundle.validation,
        "train" => &bundle.train,
        _ => &bundle.test,
    };
    if ctx.config.flag("split_candidate_pool")? {
        let pool: BTreeSet<String> = examples
            .iter()
            .flat_map(|e| e.prefix.iter().chain(std::iter::once(&e.target)))
            .map(|r| r.item_id.clone())
            .collect();
        titles = titles.restricted_to(&pool)?;
    }
    let report = grade_episodes(&records, examples, &titles, &options)?;
    let mut manifest = ctx.manifest("evaluate")?;
    manifest.corpus_digest = Some(index.corpus_digest().to_string());
    ctx.emit(&mut manifest, "eval.jsonl", &jsonl_bytes(&report.rows)?)?;
    ctx.emit(&mut manifest, "eval_cases.jsonl", &jsonl_bytes(&report.cases)?)?;
    ctx.finish(manifest)
}

/// Reads GRPO and toy-environment settings from the config.
pub fn grpo_settings(cfg: &RunConfig) -> Result<(GrpoConfig, ToyEnvSpec), PipelineError> {
    let d = GrpoConfig::default();
    let grpo = GrpoConfig {
        group_size: cfg.get_or("group_size", d.group_size)?,
        clip_eps: cfg.get_or("clip_eps", d.clip_eps)?,
        kl_coeff: cfg.get_or("kl_coeff", d.kl_coeff)?,
        temperature: cfg.get_or("temperature", d.temperature)?,
        advantage_epsilon: cfg.get_or("advantage_epsilon", d.advantage_epsilon)?,
        learning_rate: cfg.get_or("learning_rate", d.learning_rate)?,
        steps: cfg.get_or("steps", d.steps)?,
        prompts_per_step: cfg.get_or("prompts_per_step", d.prompts_per_step)?,
        inner_epochs: cfg.get_or("inner_epochs", d.inner_epochs)?,
        eval_every: cfg.get_or("eval_every", d.eval_every)?,
        eval_samples: cfg.get_or("eval_samples", d.eval_samples)?,
        tool_bias: cfg.get_or("tool_bias", d.tool_bias)?,
        max_turns: cfg.get_or("max_turns", d.max_turns)?,
        token_budget: cfg.get_or("token_budget", d.token_budget)?,
    };
    let t = ToyEnvSpec::default();
    let spec = ToyEnvSpec {
        n_users: cfg.get_or("toy_users", t.n_users)?,
        n_items: cfg.get_or("toy_items", t.n_items)?,
        n_series: cfg.get_or("toy_series", t.n_series)?,
        volumes: cfg.get_or("toy_volumes", t.volumes)?,
        pattern_fraction: cfg.get_or("toy_pattern_fraction", t.pattern_fraction)?,
        planted_pairs: cfg.get_or("toy_planted_pairs", t.planted_pairs)?,
        filler_histories: cfg.get_or("toy_filler_histories", t.filler_histories)?,
        seed: cfg.get_or("toy_seed", t.seed)?,
    };
    Ok((grpo, spec))
}

pub fn train_toy_cmd(ctx: &Context) -> Result<RunManifest, PipelineError> {
    let (grpo, spec) = grpo_settings(&ctx.config)?;
    let log = match train_toy(&spec, &grpo, ctx.seed) {
        Ok(log) => log,
        Err(crate::grpo::GrpoError::Divergence { step, log }) => {
            write_file(&ctx.path("training_log.jsonl"), &jsonl_bytes(&log.records)?)?;
            return Err(PipelineError::Config(format!("training diverged at step {step}; partial log written")));
        }
        Err(e) => return Err(e.into()),
    };
    let mut manifest = ctx.manifest("train-toy")?;
    ctx.emit(&mut manifest, "training_log.jsonl", &jsonl_bytes(&log.records)?)?;
    ctx.emit(&mut manifest, "rollouts.jsonl", &jsonl_bytes(&log.rollouts)?)?;
    let digest = grpo.digest();
    for (name, role, table) in [("policy.json", Role::Acting, &log.policy), ("reference.json", Role::Reference, &log.reference)] {
        let snap = PolicySnapshot {
            role,
            config_digest: digest.clone(),
            table: table.clone(),
        };
        ctx.emit(&mut manifest, name, serde_json::to_string_pretty(&snap)?.as_bytes())?;
    }
    ctx.finish(manifest)
}

fn sample_from(value: &serde_json::Value) -> Option<BehaviorSample> {
    let field = |k: &str| {
        value
            .get(k)
            .or_else(|| value.get("trajectory").and_then(|t| t.get("stats")).and_then(|s| s.get(k)))
            .and_then(|v| v.as_u64())
    };
    Some(BehaviorSample {
        step: value.get("step").and_then(|v| v.as_u64()).unwrap_or(0) as usize,
        retrieval_calls: field("retrieval_calls")? as usize,
        generated_tokens: field("generated_tokens")? as usize,
    })
}

/// Windows rollout records (or episode records, which count as step 0).
pub fn behavior_stats_cmd(ctx: &Context) -> Result<RunManifest, PipelineError> {
    let input: PathBuf = ctx.config.get_or("input", ctx.path("rollouts.jsonl"))?;
    let window: usize = ctx.config.get_or("window", 100)?;
    let values: Vec<serde_json::Value> = read_records(&input)?;
    let samples = values
        .iter()
        .enumerate()
        .map(|(n, v)| sample_from(v).ok_or_else(|| PipelineError::Config(format!("record {} lacks behavior fields", n + 1))))
        .collect::<Result<Vec<_>, _>>()?;
    let points = behavior_stats(&samples, window)?;
    let mut manifest = ctx.manifest("behavior-stats")?;
    ctx.emit(&mut manifest, "behavior.jsonl", &jsonl_bytes(&points)?)?;
    ctx.finish(manifest)
}
