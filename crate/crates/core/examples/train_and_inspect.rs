//! Building pairs by hand, a small grid search, training, importance and a
//! save/load round trip.

use bugdedup::corpus::{duplicate_clusters, filter_invalid};
use bugdedup::eval::evaluate_model;
use bugdedup::features::Featurizer;
use bugdedup::gbdt::{feature_importance, grid_search, load_model, save_model, train_with_log, Hyperparams, ParamGrid};
use bugdedup::pairs::{build_training_pairs, featurize_pairs, train_test_split};
use bugdedup::synth::{generate, SynthConfig};

fn main() -> bugdedup::Result<()> {
    let synth = generate(&SynthConfig {
        n_bugs: 800,
        ..SynthConfig::default()
    })?;
    let corpus = filter_invalid(&synth.corpus);
    let pairs = build_training_pairs(&corpus, &duplicate_clusters(&corpus), 1.0, 7)?;
    let split = train_test_split(&pairs, 0.2, 7)?;
    let f = Featurizer::default();
    let train = featurize_pairs(&split.train, &corpus, &f, &synth.vectors)?;
    println!("{} training rows, {} positive", train.len(), train.n_positive());

    let base = Hyperparams {
        n_estimators: 60,
        ..Hyperparams::default()
    };
    let grid = ParamGrid::new()
        .with("max_depth", [2.0, 4.0])
        .with("learning_rate", [0.1, 0.3]);
    let search = grid_search(&train, &base, &grid, 3)?;
    for (hp, loss) in &search.scores {
        println!("depth {} eta {:.1}: cv logloss {loss:.4}", hp.max_depth, hp.learning_rate);
    }

    let (model, log) = train_with_log(&train, &search.best)?;
    println!("final train logloss {:.4}", log.round_logloss.last().unwrap());
    let metrics = evaluate_model(&model, &split.test, &corpus, &synth.vectors, &f, 0.5)?;
    println!("{metrics}");

    println!("top features:");
    for (name, score) in feature_importance(&model).ranked().into_iter().take(8) {
        println!("  {name:<22} {score:.4}");
    }

    let path = std::env::temp_dir().join(format!("bugdedup-example-{}.json", std::process::id()));
    save_model(&model, &path)?;
    let back = load_model(&path)?;
    std::fs::remove_file(&path).ok();
    println!("reloaded model identical: {}", back == model);
    Ok(())
}
