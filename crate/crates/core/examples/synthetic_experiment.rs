//! The synthetic augmentation experiment: a 60-song corpus (40 with drums,
//! 20 without), one model trained on mixes and one trained only on non-drum
//! and selected drum stems, both scored on the mix test split. The stem-only
//! model is also scored on the drumless songs alone.
//!
//! ```text
//! cargo run --release --example synthetic_experiment -- [corpus-dir] [epochs]
//! ```

use std::path::PathBuf;

use beatforge::augment::{build_combination, prepare_corpus, CombinationSpec};
use beatforge::eval::EvalConfig;
use beatforge::features::FeatureConfig;
use beatforge::hmm::{DecoderConfig, DecoderGrid};
use beatforge::net::TrainConfig;
use beatforge::pipeline::{evaluate_corpus, train_and_evaluate, Tracker};
use beatforge::augment::Split;
use beatforge::selection::OnsetConfig;
use beatforge::synth::{write_corpus, SynthConfig};

fn main() -> beatforge::error::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("BEATFORGE_LOG", "info")).init();
    let mut args = std::env::args().skip(1);
    let root = PathBuf::from(args.next().unwrap_or_else(|| "synth_corpus".into()));
    let epochs = args.next().map_or(30, |s| s.parse().expect("epochs"));
    if !root.exists() {
        write_corpus(&root, 40, 20, &SynthConfig::default())?;
    }
    let corpus = prepare_corpus(&root, &OnsetConfig::default())?;
    let train_config = TrainConfig { max_epochs: epochs, patience: epochs, ..Default::default() };
    let eval = EvalConfig::default();

    println!("model,beat_f1,downbeat_f1");
    for name in ["Mix", "exMix_ABSM"] {
        let manifest = build_combination(&corpus, &CombinationSpec::by_name(name)?, 42)?;
        let run = train_and_evaluate(
            &manifest,
            &FeatureConfig::default(),
            &train_config,
            &DecoderConfig::default(),
            Some(&DecoderGrid::default()),
            &eval,
            |_| true,
        )?;
        print!("{}", run.report.to_csv().lines().nth(1).map(|l| format!("{l}\n")).unwrap_or_default());
        for c in &run.report.clips {
            log::info!("{name} {}: meter {:?} beat {:.3} downbeat {:.3}", c.song_id, c.meter, c.beat.f1, c.downbeat.f1);
        }
        if name == "exMix_ABSM" {
            let tracker = Tracker::new(FeatureConfig::default(), run.weights, &run.decoder)?;
            let drumless = evaluate_corpus(&tracker, &manifest, Split::Test, &eval, "exMix_ABSM (drumless)", |e| e.dataset == "ensemble")?;
            print!("{}", drumless.to_csv().lines().nth(1).map(|l| format!("{l}\n")).unwrap_or_default());
        }
    }
    Ok(())
}
