//! Ranking existing reports as duplicate candidates for new ones.

use bugdedup::eval::rank_candidates;
use bugdedup::features::Featurizer;
use bugdedup::pipeline::{run, PipelineConfig};
use bugdedup::synth::{generate, SynthConfig};

fn main() -> bugdedup::Result<()> {
    let synth = generate(&SynthConfig::default())?;
    let f = Featurizer::default();
    let out = run(&synth.corpus, &synth.vectors, &f, &PipelineConfig::default())?;

    for q in synth.planted.iter().take(3) {
        println!("new: {} [{} / {}]", q.bug.headline, q.bug.product, q.bug.component);
        let ranked = rank_candidates(&q.bug, &out.corpus, &out.model, &synth.vectors, &f, 5)?;
        for c in ranked {
            let mark = if q.cluster.contains(&c.bug_id) { "*" } else { " " };
            println!("  {mark} {:.3} {} {}", c.probability, c.bug_id, c.headline);
        }
        println!();
    }
    println!("* marks a true duplicate");
    Ok(())
}
