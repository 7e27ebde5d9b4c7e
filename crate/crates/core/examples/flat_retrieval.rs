//! Flat cosine index: top-k search and single-passage retrieval.

use std::sync::Arc;

use memrec::corpus::{DocKind, MemoryDocument};
use memrec::{FlatIndex, HashEmbedder};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let texts = [
        (DocKind::Collaborative, "u1", "User u1 History: [The Silent Harbor, The Crimson Harbor]"),
        (DocKind::Collaborative, "u2", "User u2 History: [The Iron Tower, The Paper Tower]"),
        (DocKind::Meta, "i1", "Movie Name: The Silent Harbor; Director: Director 3; Main Genre: Drama"),
        (DocKind::Meta, "i2", "Movie Name: The Iron Tower; Director: Director 9; Main Genre: Western"),
    ];
    let docs = texts
        .iter()
        .enumerate()
        .map(|(i, (kind, src, text))| MemoryDocument {
            doc_id: i,
            kind: *kind,
            source_ref: src.to_string(),
            text: text.to_string(),
        })
        .collect();
    let index = FlatIndex::build(docs, Arc::new(HashEmbedder::new(256)))?;
    println!("{} rows, dim {}", index.len(), index.dim());

    for query in ["User History: [The Iron Tower]", "Movie Name: The Silent Harbor director"] {
        println!("query {query:?}");
        for hit in index.search(query, 3)? {
            println!("  {:.4}  [{}] {}", hit.score, hit.doc_id, hit.text);
        }
        println!("  retrieve -> {:?}", index.retrieve(query));
    }

    let path = std::env::temp_dir().join("memrec-demo-index.bin");
    index.save(&path)?;
    let restored = FlatIndex::load(&path, index.docs().to_vec(), Arc::clone(index.embedder()))?;
    println!("reloaded index with corpus digest {}", &restored.corpus_digest()[..16]);
    Ok(())
}
