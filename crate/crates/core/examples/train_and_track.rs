//! Trains the network on a small synthetic corpus for a few epochs, then
//! tracks an unseen song and compares against its annotation.
//!
//! ```text
//! cargo run --release --example train_and_track -- [epochs]
//! ```

use beatforge::augment::{build_combination, prepare_corpus, CombinationSpec, Split};
use beatforge::eval::{evaluate_clip, EvalConfig};
use beatforge::features::{FeatureConfig, FeatureExtractor};
use beatforge::hmm::DecoderConfig;
use beatforge::net::{train, TrainConfig};
use beatforge::pipeline::{load_examples, Tracker};
use beatforge::selection::OnsetConfig;
use beatforge::synth::{synth_song, write_corpus, SynthConfig};

fn main() -> beatforge::error::Result<()> {
    let epochs = std::env::args().nth(1).map_or(8, |s| s.parse().expect("epochs"));
    let dir = tempfile::tempdir().map_err(|e| beatforge::error::Error::Input(e.to_string()))?;
    let synth = SynthConfig::default();
    write_corpus(dir.path(), 20, 0, &synth)?;
    let corpus = prepare_corpus(dir.path(), &OnsetConfig::default())?;
    let manifest = build_combination(&corpus, &CombinationSpec::by_name("Mix")?, 42)?;

    let extractor = FeatureExtractor::new(FeatureConfig::default())?;
    let config = TrainConfig { max_epochs: epochs, patience: epochs, ..Default::default() };
    let train_set = load_examples(&manifest, Split::Train, &extractor, &config)?;
    let val_set = load_examples(&manifest, Split::Val, &extractor, &config)?;
    let (weights, log) = train(&train_set, &val_set, &config)?;
    print!("{}", log.to_csv());

    let tracker = Tracker::new(FeatureConfig::default(), weights, &DecoderConfig::default())?;
    let song = synth_song(500, false, &synth)?;
    let beats = tracker.track(&song.mix)?;
    let scores = evaluate_clip(&beats, &song.annotation, &EvalConfig::default())?;
    println!(
        "unseen song at {:.1} BPM in {}/4: decoded meter {}, beat F {:.3}, downbeat F {:.3}",
        song.bpm, song.meter, beats.meter, scores.beat.f1, scores.downbeat.f1
    );
    Ok(())
}
