//! Generate demo data, ingest it, filter short histories and split it
//! chronologically. Pass a directory to keep the files; defaults to a temp dir.

use std::path::PathBuf;

use memrec::dataset::synthetic::{generate, SyntheticSpec};
use memrec::dataset::{
    filter_min_history, ingest_interactions, item_frequency, long_tail_slice, read_catalog, read_interactions,
    split_and_subsample, SplitConfig,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("memrec-demo-data"));
    let data = generate(&SyntheticSpec::default());
    let (inter, cat) = data.write(&dir)?;
    println!("wrote {} and {}", inter.display(), cat.display());

    let ingested = ingest_interactions(read_interactions(&inter)?, read_catalog(&cat)?)?;
    let histories = filter_min_history(ingested.histories, 10);
    println!("{} users with at least 10 interactions", histories.len());

    let cfg = SplitConfig::new(42).with_sizes(400, 50, 100);
    let bundle = split_and_subsample(&histories, &cfg)?;
    let c = &bundle.counts;
    println!(
        "pools train/val/test = {}/{}/{}, sampled {}/{}/{}, memory pool {} interactions",
        c.train_pool,
        c.val_pool,
        c.test_pool,
        c.train,
        c.validation,
        c.test,
        bundle.memory_pool.len()
    );
    let ex = &bundle.test[0];
    println!("test example: user {} position {} target {}", ex.user_id, ex.position, ex.target.item_id);

    let freq = item_frequency(&histories);
    let tail = long_tail_slice(&bundle.test, &freq, 0.2)?;
    println!("long-tail slice: {} of {} test examples", tail.len(), bundle.test.len());

    let manifest = bundle.write_dir(&dir.join("splits"))?;
    for (name, digest) in &manifest.digests {
        println!("{name:<12} {}", &digest[..16]);
    }
    Ok(())
}
