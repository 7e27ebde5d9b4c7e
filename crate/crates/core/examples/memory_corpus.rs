//! Build the dual memory corpus (collaborative histories plus item metadata) from
//! demo data and print a few documents of each kind.

use memrec::corpus::{build_corpus, corpus_digest, CorpusConfig, DocKind};
use memrec::dataset::synthetic::{generate, SyntheticSpec};
use memrec::dataset::{filter_min_history, ingest_interactions, split_and_subsample, SplitConfig};
use memrec::{AblationFlags, DatasetProfile};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = generate(&SyntheticSpec {
        n_users: 400,
        ..SyntheticSpec::default()
    });
    let ingested = ingest_interactions(data.interactions, data.items)?;
    let histories = filter_min_history(ingested.histories, 10);
    let bundle = split_and_subsample(&histories, &SplitConfig::new(1).with_sizes(300, 40, 60))?;
    let profile = DatasetProfile::movielens();
    let config = CorpusConfig {
        max_history_titles: 8,
        ..CorpusConfig::default()
    };

    let docs = build_corpus(&bundle, &ingested.catalog, &profile, AblationFlags::default(), &config);
    let collab = docs.iter().filter(|d| d.kind == DocKind::Collaborative).count();
    println!("{} documents: {} collaborative, {} metadata", docs.len(), collab, docs.len() - collab);
    for kind in [DocKind::Collaborative, DocKind::Meta] {
        for doc in docs.iter().filter(|d| d.kind == kind).take(2) {
            println!("[{}] {}", doc.doc_id, doc.text);
        }
    }
    println!("digest {}", corpus_digest(&docs));

    let meta_only = build_corpus(
        &bundle,
        &ingested.catalog,
        &profile,
        AblationFlags {
            without_cf: true,
            ..AblationFlags::default()
        },
        &config,
    );
    println!("without collaborative memory: {} documents", meta_only.len());
    Ok(())
}
