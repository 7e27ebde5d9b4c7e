//! Ground free-text answers onto the catalog and score them with the ranking reward.

use std::sync::Arc;

use memrec::dataset::synthetic::{generate, SyntheticSpec};
use memrec::grounding::{ground, reward, RewardConfig, TitleIndex};
use memrec::metrics::{case_ndcg, hit_ratio};
use memrec::{HashEmbedder, ItemCatalog};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let catalog: ItemCatalog = generate(&SyntheticSpec::default()).items.into_iter().collect();
    let titles = TitleIndex::build(&catalog, Arc::new(HashEmbedder::new(256)))?;
    let cfg = RewardConfig::default();
    let truth = "i0005";
    println!("ground truth {truth} = {:?}", catalog.title(truth).unwrap_or_default());

    for answer in [Some("\"The Distant Harbor\""), Some("the distant harbour"), Some("The Hollow Harbor"), Some("Paper Tower"), None] {
        let cands = ground(answer, &titles, 100)?;
        let r = reward(&cands, truth, answer.is_some(), &cfg);
        let top: Vec<_> = cands.items.iter().take(3).map(|c| catalog.title(&c.item_id).unwrap_or("?")).collect();
        println!(
            "{:<24} rank {:>4} reward {:.2}  top {:?}",
            format!("{answer:?}"),
            r.rank_of_truth.map(|r| r.to_string()).unwrap_or("-".into()),
            r.total,
            top
        );
    }

    println!("\nreward by rank of the ground truth");
    for rank in [1, 2, 5, 6, 10, 11, 50, 51, 100, 101] {
        println!("  rank {rank:>3}: {:.2}", cfg.accuracy_at(Some(rank)));
    }
    let ranks = [Some(1), Some(3), None, Some(7)];
    println!("HR@5 {:.3} NDCG(rank 3) {:.3}", hit_ratio(&ranks, 5)?, case_ndcg(Some(3), 5));
    Ok(())
}
