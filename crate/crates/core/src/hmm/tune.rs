use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{decode, DecoderConfig, StateSpace};
use crate::beats::BeatAnnotation;
use crate::error::{Error, Result};
use crate::eval::{evaluate_clip, EvalConfig};
use crate::net::ActivationSequence;

/// Candidate decoder settings. Every combination of lambda, observation
/// weight and tempo range is tried; other fields come from `base`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecoderGrid {
    pub base: DecoderConfig,
    pub lambdas: Vec<f64>,
    pub observation_weights: Vec<f64>,
    /// `(min_bpm, max_bpm)` presets.
    pub tempo_ranges: Vec<(f64, f64)>,
}

impl Default for DecoderGrid {
    fn default() -> Self {
        Self {
            base: DecoderConfig::default(),
            lambdas: vec![10.0, 100.0, 1000.0],
            observation_weights: vec![1.0 / 16.0, 1.0 / 8.0],
            tempo_ranges: vec![(55.0, 215.0), (60.0, 180.0)],
        }
    }
}

impl DecoderGrid {
    /// A grid holding exactly one configuration.
    pub fn single(config: DecoderConfig) -> Self {
        Self {
            lambdas: vec![config.transition_lambda],
            observation_weights: vec![config.observation_weight],
            tempo_ranges: vec![(config.min_bpm, config.max_bpm)],
            base: config,
        }
    }

    /// Configurations in search order: tempo range outermost, then lambda,
    /// then observation weight.
    pub fn configs(&self) -> Vec<DecoderConfig> {
        let mut out = Vec::new();
        for &(min_bpm, max_bpm) in &self.tempo_ranges {
            for &transition_lambda in &self.lambdas {
                for &observation_weight in &self.observation_weights {
                    out.push(DecoderConfig {
                        min_bpm,
                        max_bpm,
                        transition_lambda,
                        observation_weight,
                        ..self.base.clone()
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub best: DecoderConfig,
    pub best_score: f64,
    /// Every evaluated configuration with its mean `(beat F1 + downbeat F1) / 2`.
    pub scores: Vec<(DecoderConfig, f64)>,
}

/// Exhaustive grid search on a validation set. The first configuration in
/// grid order wins ties.
pub fn tune(grid: &DecoderGrid, val_set: &[(ActivationSequence, BeatAnnotation)], eval: &EvalConfig) -> Result<TuneResult> {
    let configs = grid.configs();
    if configs.is_empty() {
        return Err(Error::Config("decoder grid is empty".into()));
    }
    if val_set.is_empty() {
        return Err(Error::EmptyInput("tuning needs at least one validation pair".into()));
    }
    let mut scores = Vec::with_capacity(configs.len());
    for config in configs {
        let space = StateSpace::build(&config)?;
        let per_clip: Vec<f64> = val_set
            .par_iter()
            .map(|(acts, ann)| Ok(evaluate_clip(&decode(acts, &space)?, ann, eval)?.combined()))
            .collect::<Result<_>>()?;
        let mean = per_clip.iter().sum::<f64>() / per_clip.len() as f64;
        log::debug!(
            "tune: bpm {}..{} lambda {} weight {} -> {mean:.4}",
            config.min_bpm,
            config.max_bpm,
            config.transition_lambda,
            config.observation_weight
        );
        scores.push((config, mean));
    }
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if s.1 > scores[best].1 {
            best = i;
        }
    }
    Ok(TuneResult {
        best: scores[best].0.clone(),
        best_score: scores[best].1,
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beats::BeatEvent;

    /// Peaky activations for a steady pulse, downbeat on every `meter`-th beat.
    fn pulse(bpm: f64, meter: u32, seconds: f64) -> (ActivationSequence, BeatAnnotation) {
        let frames = (seconds * 100.0) as usize;
        let mut rows = vec![[0.02f32, 0.02, 0.96]; frames];
        let period = 60.0 / bpm;
        let mut events = Vec::new();
        let mut k = 0u32;
        loop {
            let t = 0.3 + k as f64 * period;
            let f = (t * 100.0).round() as usize;
            if f >= frames {
                break;
            }
            let pos = k % meter + 1;
            rows[f] = if pos == 1 { [0.04, 0.92, 0.04] } else { [0.92, 0.04, 0.04] };
            events.push(BeatEvent::new(f as f64 / 100.0, pos));
            k += 1;
        }
        (ActivationSequence { rows, frame_rate: 100.0 }, BeatAnnotation::new(events).unwrap())
    }

    fn small_base() -> DecoderConfig {
        DecoderConfig {
            tempo_levels: 12,
            ..Default::default()
        }
    }

    #[test]
    fn empty_grid_is_config_error() {
        let grid = DecoderGrid {
            lambdas: vec![],
            ..Default::default()
        };
        let err = tune(&grid, &[pulse(120.0, 4, 6.0)], &EvalConfig::default()).unwrap_err();
        assert_eq!(err.kind(), "ConfigError");
    }

    #[test]
    fn single_point_grid_returns_it() {
        let cfg = DecoderConfig {
            transition_lambda: 37.0,
            ..small_base()
        };
        let r = tune(&DecoderGrid::single(cfg.clone()), &[pulse(120.0, 4, 6.0)], &EvalConfig::default()).unwrap();
        assert_eq!(r.best, cfg);
        assert_eq!(r.scores.len(), 1);
    }

    #[test]
    fn preset_that_cannot_reach_the_tempo_loses() {
        let grid = DecoderGrid {
            base: small_base(),
            lambdas: vec![100.0],
            observation_weights: vec![1.0 / 16.0],
            tempo_ranges: vec![(60.0, 120.0), (60.0, 200.0)],
        };
        let val = [pulse(180.0, 4, 8.0)];
        let r = tune(&grid, &val, &EvalConfig::default()).unwrap();
        assert_eq!((r.best.min_bpm, r.best.max_bpm), (60.0, 200.0));
        assert!(r.scores[0].1 < r.scores[1].1);
    }

    #[test]
    fn ties_keep_grid_order() {
        let grid = DecoderGrid {
            base: small_base(),
            lambdas: vec![50.0, 100.0],
            observation_weights: vec![1.0 / 16.0],
            tempo_ranges: vec![(60.0, 200.0)],
        };
        let r = tune(&grid, &[pulse(120.0, 3, 8.0)], &EvalConfig::default()).unwrap();
        assert_eq!(r.scores[0].1, r.scores[1].1);
        assert_eq!(r.best.transition_lambda, 50.0);
    }

    #[test]
    fn lambda_that_tracks_a_tempo_change_wins() {
        let base = DecoderConfig {
            beats_per_bar: vec![4],
            min_bpm: 60.0,
            max_bpm: 120.0,
            tempo_levels: 2,
            ..Default::default()
        };
        let (slow, slow_ann) = pulse(60.0, 4, 8.0);
        let (fast, fast_ann) = pulse(120.0, 4, 8.0);
        let offset = slow.rows.len() as f64 / 100.0;
        let mut rows = slow.rows.clone();
        rows.extend_from_slice(&fast.rows);
        let mut events = slow_ann.events().to_vec();
        let last = events.last().unwrap().bar_position;
        events.extend(fast_ann.events().iter().enumerate().map(|(i, e)| {
            BeatEvent::new(e.time + offset, (last + i as u32) % 4 + 1)
        }));
        // keep the clicks of both halves consistent with the relabelled positions
        for e in &events {
            let f = (e.time * 100.0).round() as usize;
            rows[f] = if e.bar_position == 1 { [0.04, 0.92, 0.04] } else { [0.92, 0.04, 0.04] };
        }
        let val = [(ActivationSequence { rows, frame_rate: 100.0 }, BeatAnnotation::new(events).unwrap())];
        let grid = DecoderGrid {
            base,
            lambdas: vec![10_000.0, 1.0, 50_000.0],
            observation_weights: vec![1.0 / 16.0],
            tempo_ranges: vec![(60.0, 120.0)],
        };
        let r = tune(&grid, &val, &EvalConfig::default()).unwrap();
        assert_eq!(r.best.transition_lambda, 1.0);
        assert_eq!(r.best_score, 1.0);
        assert!(r.scores.iter().filter(|s| s.0.transition_lambda != 1.0).all(|s| s.1 < 1.0));
    }
}

