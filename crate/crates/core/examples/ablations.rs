//! What each ablation flag changes: the rendered prompt and the memory corpus.

use memrec::corpus::{build_corpus, CorpusConfig, DocKind};
use memrec::dataset::synthetic::{generate, SyntheticSpec};
use memrec::dataset::{filter_min_history, ingest_interactions, split_and_subsample, SplitConfig};
use memrec::episode::render_prompt;
use memrec::{AblationFlags, DatasetProfile};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = generate(&SyntheticSpec {
        n_users: 400,
        ..SyntheticSpec::default()
    });
    let ingested = ingest_interactions(data.interactions, data.items)?;
    let histories = filter_min_history(ingested.histories, 10);
    let bundle = split_and_subsample(&histories, &SplitConfig::new(3).with_sizes(300, 40, 60))?;
    let profile = DatasetProfile::movielens();
    let history = vec!["The Silent Harbor".to_string(), "The Crimson Harbor".to_string()];

    let variants = [
        ("full", AblationFlags::default()),
        ("without cf", AblationFlags { without_cf: true, ..Default::default() }),
        ("without meta", AblationFlags { without_meta: true, ..Default::default() }),
        ("without re", AblationFlags { without_re: true, ..Default::default() }),
    ];
    for (name, flags) in variants {
        let docs = build_corpus(&bundle, &ingested.catalog, &profile, flags, &CorpusConfig::default());
        let collab = docs.iter().filter(|d| d.kind == DocKind::Collaborative).count();
        let prompt = render_prompt(&history, &profile, flags)?;
        println!("== {name}: {collab} collaborative docs, {} meta docs", docs.len() - collab);
        for line in prompt.text.lines().skip(2) {
            println!("   {line}");
        }
    }
    Ok(())
}
