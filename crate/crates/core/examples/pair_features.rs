//! The 28 pair features for a duplicate pair and an unrelated pair.

use bugdedup::features::Featurizer;
use bugdedup::synth::{generate, SynthConfig};

fn main() -> bugdedup::Result<()> {
    let synth = generate(&SynthConfig::default())?;
    let corpus = &synth.corpus;
    let dup = corpus
        .iter()
        .find(|b| b.duplicate_of.is_some())
        .expect("synthetic corpus has duplicates");
    let original = corpus.get(dup.duplicate_of.as_deref().unwrap()).unwrap();
    let unrelated = corpus.iter().find(|b| b.product != original.product).unwrap();

    let f = Featurizer::default();
    let [a, b, c] = [original, dup, unrelated].map(|bug| f.profile_bug(bug, &synth.vectors));
    let ab = f.pair(&a, &b)?;
    let ac = f.pair(&a, &c)?;
    println!("A: {}\nB: {} (duplicate of A)\nC: {}\n", original.headline, dup.headline, unrelated.headline);
    println!("{:<22} {:>10} {:>10}", "feature", "A-B", "A-C");
    for (i, name) in f.schema().names().iter().enumerate() {
        println!("{name:<22} {:>10.4} {:>10.4}", ab.values[i], ac.values[i]);
    }
    println!("\nschema {}", ab.schema_hash.to_hex());
    Ok(())
}
