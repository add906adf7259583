//! End-to-end glue: audio to beats, manifests to training sets and reports.

use std::path::Path;

use rayon::prelude::*;

use crate::audio::AudioClip;
use crate::augment::{DatasetManifest, ManifestEntry, Split};
use crate::beats::{BeatAnnotation, BeatSequence};
use crate::error::{Error, Result};
use crate::eval::{evaluate_clip, ClipReport, EvalConfig, EvalReport, SkippedClip};
use crate::features::{FeatureConfig, FeatureExtractor, FeatureMatrix};
use crate::hmm::{decode, tune, DecoderConfig, DecoderGrid, StateSpace};
use crate::net::{forward, train, ActivationSequence, NetworkWeights, Targets, TrainConfig, TrainingExample, TrainingLog};

/// Features, network and decoder bundled for repeated use.
pub struct Tracker {
    extractor: FeatureExtractor,
    weights: NetworkWeights<f32>,
    space: StateSpace,
}

impl Tracker {
    pub fn new(features: FeatureConfig, weights: NetworkWeights<f32>, decoder: &DecoderConfig) -> Result<Self> {
        let extractor = FeatureExtractor::new(features)?;
        if extractor.dims() != weights.architecture().input_dim {
            return Err(Error::Shape(format!(
                "features have {} dims, checkpoint expects {}",
                extractor.dims(),
                weights.architecture().input_dim
            )));
        }
        if (decoder.frame_rate - extractor.config().frame_rate as f64).abs() > 1e-9 {
            return Err(Error::Config("decoder and feature frame rates differ".into()));
        }
        Ok(Self {
            extractor,
            weights,
            space: StateSpace::build(decoder)?,
        })
    }

    pub fn activations(&self, clip: &AudioClip) -> Result<ActivationSequence> {
        forward(&self.extractor.extract(clip)?, &self.weights)
    }

    pub fn track(&self, clip: &AudioClip) -> Result<BeatSequence> {
        decode(&self.activations(clip)?, &self.space)
    }

    pub fn track_file(&self, path: &Path) -> Result<BeatSequence> {
        self.track(&AudioClip::load(path)?)
    }
}

/// Features of a clip plus frame targets from its annotation.
pub fn training_example(
    features: FeatureMatrix,
    annotation: &BeatAnnotation,
    config: &TrainConfig,
) -> TrainingExample {
    let events: Vec<(f64, u32)> = annotation.events().iter().map(|e| (e.time, e.bar_position)).collect();
    let mut targets = Targets::from_events(&events, features.frames(), features.frame_rate as f64, config.target_widen_frames);
    if let Some(cw) = config.class_weights {
        targets = targets.reweighted(cw);
    }
    TrainingExample { features, targets }
}

/// Training examples for every entry of a split, in manifest order.
pub fn load_examples(
    manifest: &DatasetManifest,
    split: Split,
    extractor: &FeatureExtractor,
    config: &TrainConfig,
) -> Result<Vec<TrainingExample>> {
    let entries: Vec<&ManifestEntry> = manifest.entries_in(split).collect();
    entries
        .par_iter()
        .map(|e| {
            let clip = AudioClip::load(manifest.resolve(&e.audio))?;
            let ann = BeatAnnotation::read(&manifest.resolve(&e.annotation))?;
            Ok(training_example(extractor.extract(&clip)?, &ann, config))
        })
        .collect()
}

/// Activations and annotations of a split, for decoder tuning.
pub fn load_activations(
    manifest: &DatasetManifest,
    split: Split,
    tracker: &Tracker,
) -> Result<Vec<(ActivationSequence, BeatAnnotation)>> {
    let entries: Vec<&ManifestEntry> = manifest.entries_in(split).collect();
    entries
        .par_iter()
        .map(|e| {
            let clip = AudioClip::load(manifest.resolve(&e.audio))?;
            let ann = BeatAnnotation::read(&manifest.resolve(&e.annotation))?;
            Ok((tracker.activations(&clip)?, ann))
        })
        .collect()
}

fn skipped(e: &ManifestEntry, err: Error) -> SkippedClip {
    log::warn!("skipping {}: {err}", e.song_id);
    SkippedClip {
        song_id: e.song_id.clone(),
        error_kind: err.kind().into(),
        message: err.to_string(),
    }
}

/// Tracks every entry of `split` accepted by `keep` and scores it. Clips that
/// fail are listed as skipped, never dropped silently.
pub fn evaluate_corpus(
    tracker: &Tracker,
    manifest: &DatasetManifest,
    split: Split,
    config: &EvalConfig,
    model: &str,
    keep: impl Fn(&ManifestEntry) -> bool + Sync,
) -> Result<EvalReport> {
    config.validate()?;
    let entries: Vec<&ManifestEntry> = manifest.entries_in(split).filter(|e| keep(e)).collect();
    if entries.is_empty() {
        return Err(Error::EmptyInput(format!("no {split:?} entries to evaluate")));
    }
    let results: Vec<std::result::Result<ClipReport, SkippedClip>> = entries
        .par_iter()
        .map(|e| {
            let run = || -> Result<ClipReport> {
                let est = tracker.track_file(&manifest.resolve(&e.audio))?;
                let ann = BeatAnnotation::read(&manifest.resolve(&e.annotation))?;
                let s = evaluate_clip(&est, &ann, config)?;
                Ok(ClipReport {
                    song_id: e.song_id.clone(),
                    meter: Some(est.meter),
                    beat: s.beat,
                    downbeat: s.downbeat,
                })
            };
            run().map_err(|err| skipped(e, err))
        })
        .collect();
    let (mut clips, mut skips) = (Vec::new(), Vec::new());
    for r in results {
        match r {
            Ok(c) => clips.push(c),
            Err(s) => skips.push(s),
        }
    }
    Ok(EvalReport::new(model, *config, Some(manifest.provenance.clone()), clips, skips))
}

/// Scores precomputed estimate files `<est_dir>/<song_id>.beats` against the
/// manifest annotations of `split`. A missing estimate file is a skip.
pub fn evaluate_estimates(
    est_dir: &Path,
    manifest: &DatasetManifest,
    split: Split,
    config: &EvalConfig,
    model: &str,
) -> Result<EvalReport> {
    config.validate()?;
    let mut clips = Vec::new();
    let mut skips = Vec::new();
    for e in manifest.entries_in(split) {
        let run = || -> Result<ClipReport> {
            let est = BeatSequence::read(&est_dir.join(format!("{}.beats", e.song_id)))?;
            let ann = BeatAnnotation::read(&manifest.resolve(&e.annotation))?;
            let s = evaluate_clip(&est, &ann, config)?;
            Ok(ClipReport {
                song_id: e.song_id.clone(),
                meter: None,
                beat: s.beat,
                downbeat: s.downbeat,
            })
        };
        match run() {
            Ok(c) => clips.push(c),
            Err(err) => skips.push(skipped(e, err)),
        }
    }
    if clips.is_empty() && skips.is_empty() {
        return Err(Error::EmptyInput(format!("no {split:?} entries to evaluate")));
    }
    Ok(EvalReport::new(model, *config, Some(manifest.provenance.clone()), clips, skips))
}

/// Outcome of [`train_and_evaluate`].
pub struct Experiment {
    pub weights: NetworkWeights<f32>,
    pub log: TrainingLog,
    /// Decoder used for the test split, tuned when a grid was given.
    pub decoder: DecoderConfig,
    pub report: EvalReport,
}

/// Trains on the train split, optionally tunes the decoder on the validation
/// split, then evaluates the test split entries accepted by `keep`.
pub fn train_and_evaluate(
    manifest: &DatasetManifest,
    features: &FeatureConfig,
    train_config: &TrainConfig,
    decoder: &DecoderConfig,
    grid: Option<&DecoderGrid>,
    eval: &EvalConfig,
    keep: impl Fn(&ManifestEntry) -> bool + Sync,
) -> Result<Experiment> {
    let extractor = FeatureExtractor::new(features.clone())?;
    let train_set = load_examples(manifest, Split::Train, &extractor, train_config)?;
    let val_set = load_examples(manifest, Split::Val, &extractor, train_config)?;
    let (weights, log) = train(&train_set, &val_set, train_config)?;
    drop((train_set, val_set));
    let mut decoder = decoder.clone();
    if let Some(grid) = grid {
        let probe = Tracker::new(features.clone(), weights.clone(), &decoder)?;
        let val = load_activations(manifest, Split::Val, &probe)?;
        let grid = DecoderGrid {
            base: decoder.clone(),
            ..grid.clone()
        };
        decoder = tune(&grid, &val, eval)?.best;
    }
    let tracker = Tracker::new(features.clone(), weights.clone(), &decoder)?;
    let report = evaluate_corpus(&tracker, manifest, Split::Test, eval, &manifest.provenance.combination, keep)?;
    Ok(Experiment {
        weights,
        log,
        decoder,
        report,
    })
}
