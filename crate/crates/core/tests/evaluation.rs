use std::collections::HashMap;
use std::sync::Arc;

use memrec::corpus::{build_corpus, CorpusConfig};
use memrec::dataset::synthetic::{generate, SyntheticSpec};
use memrec::dataset::{filter_min_history, ingest_interactions, split_and_subsample, NextItemExample, SplitConfig};
use memrec::episode::{EpisodeConfig, Policy, ScriptedPolicy};
use memrec::grounding::TitleIndex;
use memrec::pipeline::{evaluate, grade_episodes, EpisodeOptions, EvalOptions, PolicyFactory};
use memrec::{AblationFlags, DatasetProfile, FlatIndex, HashEmbedder, ItemCatalog, SplitBundle};

struct Fixture {
    bundle: SplitBundle,
    catalog: ItemCatalog,
    corpus: Vec<memrec::MemoryDocument>,
    index: FlatIndex,
    titles: TitleIndex,
}

fn fixture() -> Fixture {
    let data = generate(&SyntheticSpec::default());
    let ingested = ingest_interactions(data.interactions, data.items).unwrap();
    let histories = filter_min_history(ingested.histories, 10);
    let bundle = split_and_subsample(&histories, &SplitConfig::new(4).with_sizes(200, 20, 50)).unwrap();
    let profile = DatasetProfile::movielens();
    let corpus = build_corpus(&bundle, &ingested.catalog, &profile, AblationFlags::default(), &CorpusConfig::default());
    let embedder = Arc::new(HashEmbedder::new(256));
    let index = FlatIndex::build(corpus.clone(), embedder.clone()).unwrap();
    let titles = TitleIndex::build(&ingested.catalog, embedder).unwrap();
    Fixture {
        bundle,
        catalog: ingested.catalog,
        corpus,
        index,
        titles,
    }
}

fn run(fx: &Fixture, factory: &PolicyFactory<'_>, options: &EvalOptions) -> memrec::pipeline::EvalReport {
    let episode = EpisodeOptions {
        episode: EpisodeConfig::default(),
        max_prompt_titles: 50,
        seed: 1,
    };
    evaluate(
        &fx.bundle.test,
        &fx.corpus,
        &fx.index,
        &fx.catalog,
        &fx.titles,
        &DatasetProfile::movielens(),
        AblationFlags::default(),
        factory,
        &episode,
        options,
    )
    .unwrap()
}

#[test]
fn oracle_policy_scores_perfectly() {
    let fx = fixture();
    let catalog = &fx.catalog;
    let oracle = move |ex: &NextItemExample, _| {
        let title = catalog.title(&ex.target.item_id).unwrap().to_string();
        Box::new(ScriptedPolicy::answer(&title)) as Box<dyn Policy + Send>
    };
    let report = run(&fx, &oracle, &EvalOptions::default());
    assert_eq!(report.cases.len(), 50);
    for row in &report.rows {
        assert_eq!(row.hr, 1.0, "HR@{}", row.n);
        assert!((row.ndcg - 1.0).abs() < 1e-12);
    }
    assert!(report.cases.iter().all(|c| c.reward == 1.0 && c.rank == Some(1)));
}

#[test]
fn unparseable_answers_score_zero_and_penalty() {
    let fx = fixture();
    let silent = |_: &NextItemExample, _| {
        Box::new(ScriptedPolicy::new(["<think> hmm </think> no answer"])) as Box<dyn Policy + Send>
    };
    let report = run(&fx, &silent, &EvalOptions::default());
    assert!(report.rows.iter().all(|r| r.hr == 0.0 && r.ndcg == 0.0));
    assert!(report.cases.iter().all(|c| c.reward == -1.0 && !c.parse_ok));
}

#[test]
fn empty_long_tail_slice_reports_nothing() {
    let fx = fixture();
    let freq: HashMap<String, usize> = fx.catalog.iter().map(|i| (i.item_id.clone(), 3)).collect();
    let options = EvalOptions {
        long_tail: Some((freq, 0.2)),
        ..EvalOptions::default()
    };
    let report = grade_episodes(&[], &[], &fx.titles, &options).unwrap();
    assert_eq!(report.long_tail_cases, Some(0));
    assert!(report.rows.is_empty());
    assert!(report.cases.is_empty());
}

#[test]
fn long_tail_rows_cover_the_rarest_targets() {
    let fx = fixture();
    let echo = |_: &NextItemExample, _| Box::new(ScriptedPolicy::answer("The Silent Harbor")) as Box<dyn Policy + Send>;
    let freq: HashMap<String, usize> = fx.catalog.iter().map(|i| (i.item_id.clone(), 3)).collect();
    let options = EvalOptions {
        long_tail: Some((freq, 0.2)),
        ..EvalOptions::default()
    };
    let report = run(&fx, &echo, &options);
    let n = report.long_tail_cases.unwrap();
    assert!(n > 0 && n < report.cases.len());
    let tail_rows: Vec<_> = report.rows.iter().filter(|r| r.split == "test_long_tail").collect();
    assert_eq!(tail_rows.len(), 2);
    assert!(tail_rows.iter().all(|r| r.count == n));
}
