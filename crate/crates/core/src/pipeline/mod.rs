//! Configuration, reports and the command set.

mod commands;
mod config;
mod reports;

use thiserror::Error;

pub use commands::{
    behavior_stats_cmd, build_corpus_cmd, build_data, build_index_cmd, evaluate_cmd, grpo_settings, run_episodes_cmd,
    train_toy_cmd, Context, CATALOG_FILE, CORPUS_FILE, DATA_DIR, FREQUENCY_FILE, INDEX_FILE,
};
pub use config::RunConfig;
pub use reports::{
    behavior_stats, check_index, evaluate, grade_episodes, run_episodes, BehaviorPoint, BehaviorSample, CaseRecord,
    EpisodeOptions, EpisodeRecord, EvalOptions, EvalReport, PolicyFactory, RunManifest,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("config key `{0}` is required")]
    MissingKey(String),
    #[error("index was built from corpus {index} but the corpus on disk is {corpus}")]
    ManifestMismatch { index: String, corpus: String },
    #[error(transparent)]
    Dataset(#[from] crate::dataset::DatasetError),
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error(transparent)]
    Embedding(#[from] crate::embedding::EmbeddingError),
    #[error(transparent)]
    Index(#[from] crate::index::IndexError),
    #[error(transparent)]
    Episode(#[from] crate::episode::EpisodeError),
    #[error(transparent)]
    Grounding(#[from] crate::grounding::GroundingError),
    #[error(transparent)]
    Grpo(#[from] crate::grpo::GrpoError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
