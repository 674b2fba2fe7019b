//! Full pipeline on the seeded synthetic corpus: pairs, group split, training
//! with the default hyperparameters and holdout metrics.

use std::time::Instant;

use bugdedup::features::Featurizer;
use bugdedup::pipeline::{run, PipelineConfig};
use bugdedup::synth::{generate, SynthConfig};

fn main() -> bugdedup::Result<()> {
    let start = Instant::now();
    let synth = generate(&SynthConfig::default())?;
    let out = run(&synth.corpus, &synth.vectors, &Featurizer::default(), &PipelineConfig::default())?;

    let r = &out.split.report;
    println!(
        "{} bugs, {} train pairs, {} test pairs ({} straddling dropped)",
        out.corpus.len(),
        r.train_pairs,
        r.test_pairs,
        r.dropped_straddling
    );
    let losses = &out.log.round_logloss;
    println!("train logloss {:.4} -> {:.4}", losses[0], losses[losses.len() - 1]);
    println!("{}", out.metrics);
    println!("elapsed {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
