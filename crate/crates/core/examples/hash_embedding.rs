//! The built-in hashed character 3-gram embedder.

use memrec::embedding::{cosine, Embedder, HashEmbedder};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let e = HashEmbedder::new(256);
    let text = "Movie Name: The Silent Harbor";
    println!("grams of {:?}: {:?}", "Harbor", HashEmbedder::grams("Harbor"));
    let v = e.embed(text)?;
    let norm: f64 = v.values().iter().map(|x| x * x).sum::<f64>().sqrt();
    println!("dim {} norm {norm:.12}", v.values().len());

    let pairs = [
        ("The Silent Harbor", "the silent harbor"),
        ("The Silent Harbor", "The Silent Garden"),
        ("The Silent Harbor", "Documentary, Western"),
    ];
    for (a, b) in pairs {
        println!("cos({a:?}, {b:?}) = {:.4}", cosine(&e.embed(a)?, &e.embed(b)?));
    }
    println!("empty text embeds to the zero vector: {:?}", e.embed("")?.values().iter().all(|x| *x == 0.0));
    Ok(())
}
