//! Agentic recommendation over dual textual memories.
//!
//! The crate wires together the pieces needed to train and evaluate a policy that
//! decides, turn by turn, whether to reason, query a memory corpus, or commit to a
//! recommendation:
//!
//! - [`dataset`]: interaction ingestion, minimum-history filtering, chronological
//!   8:1:1 splitting with seeded subsampling, and long-tail slicing.
//! - [`corpus`]: collaborative-history and item-metadata documents.
//! - [`embedding`]: the text-to-vector interface (a built-in hashed n-gram embedder,
//!   external vector tables and a remote endpoint client).
//! - [`index`]: a flat dense index exposing top-k search and single-passage retrieval.
//! - [`episode`]: prompt rendering, the tagged transcript parser and the
//!   reason/retrieve/answer loop.
//! - [`grounding`] and [`metrics`]: answer-to-catalog grounding, the weighted top-n
//!   reward, HR@N and NDCG@N.
//! - [`grpo`]: group-relative advantages, the clipped token surrogate with a KL
//!   penalty, and a trainable toy policy with a synthetic environment.
//! - [`pipeline`]: configuration, run manifests, reports and the command set used by
//!   the `memrec` binary.
//!
//! Runnable walkthroughs for each capability live under `examples/`.

pub mod corpus;
pub mod dataset;
pub mod embedding;
pub mod episode;
pub mod grounding;
pub mod grpo;
pub mod index;
pub mod metrics;
pub mod pipeline;
pub mod profile;

pub use corpus::{build_corpus, DocKind, MemoryDocument};
pub use dataset::{InteractionRecord, ItemCatalog, ItemRecord, SplitBundle, UserHistory};
pub use embedding::{cosine, Embedder, HashEmbedder, Vector};
pub use episode::{run_episode, EpisodePrompt, Policy, Trajectory};
pub use grounding::{ground, reward, CandidateList, RewardConfig};
pub use index::{FlatIndex, Hit};
pub use profile::{AblationFlags, DatasetProfile};
