//! Drum-stem admission filters.
//!
//! ABSM keeps a stem whose mean absolute sample value reaches 0.01. OSFQ is
//! looser on energy (0.001) but also demands at least one prominent onset per
//! second, which rejects stems holding only a few isolated hits.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::features::{stft_magnitude, Filterbank};

pub const ABSM_THRESHOLD: f64 = 0.01;
pub const OSFQ_ENERGY_THRESHOLD: f64 = 0.001;
/// Onsets per second.
pub const OSFQ_RATE_THRESHOLD: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OnsetConfig {
    pub window: usize,
    pub frame_rate: f64,
    pub bands_per_octave: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub pre_max: usize,
    pub post_max: usize,
    pub pre_avg: usize,
    pub post_avg: usize,
    pub delta: f32,
    pub wait: usize,
}

impl Default for OnsetConfig {
    fn default() -> Self {
        Self {
            window: 1024,
            frame_rate: 100.0,
            bands_per_octave: 12,
            fmin: 30.0,
            fmax: 17_000.0,
            pre_max: 3,
            post_max: 3,
            pre_avg: 10,
            post_avg: 10,
            delta: 0.07,
            wait: 3,
        }
    }
}

impl OnsetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 2 || !(self.frame_rate > 0.0) || !(self.delta >= 0.0) {
            return Err(Error::Config("onset: window >= 2, frame_rate > 0 and delta >= 0 required".into()));
        }
        Ok(())
    }
}

fn check(clip: &AudioClip) -> Result<()> {
    if clip.is_empty() {
        return Err(Error::EmptyInput(format!("clip `{}` has no samples", clip.source_id())));
    }
    Ok(())
}

/// `(1/N) * sum |x_i|`.
pub fn mean_abs_magnitude(clip: &AudioClip) -> Result<f64> {
    check(clip)?;
    let sum: f64 = clip.samples().iter().map(|s| s.abs() as f64).sum();
    Ok(sum / clip.len() as f64)
}

/// Spectral flux: mean over log-filterbank bands of the positive change from
/// the previous frame. Frame 0 has no predecessor and scores 0.
pub fn onset_envelope(clip: &AudioClip, config: &OnsetConfig) -> Result<Vec<f32>> {
    check(clip)?;
    config.validate()?;
    let hop = (clip.sample_rate() as f64 / config.frame_rate).round().max(1.0) as usize;
    let spec = stft_magnitude(clip, config.window, hop)?;
    let bank = Filterbank::logarithmic(config.window, clip.sample_rate(), config.bands_per_octave, config.fmin, config.fmax)?;
    let nb = bank.n_bands();
    let mut prev = vec![0.0f32; nb];
    let mut cur = vec![0.0f32; nb];
    let mut env = Vec::with_capacity(spec.rows());
    for t in 0..spec.rows() {
        bank.apply(spec.row(t), &mut cur);
        for v in cur.iter_mut() {
            *v = (1.0 + *v).log10();
        }
        let flux = if t == 0 {
            0.0
        } else {
            cur.iter().zip(&prev).map(|(c, p)| (c - p).max(0.0)).sum::<f32>() / nb as f32
        };
        env.push(flux);
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(env)
}

/// Frame indices that are local maxima over `[t - pre_max, t + post_max]`,
/// reach the local mean over `[t - pre_avg, t + post_avg]` plus `delta`, and
/// lie at least `wait` frames after the previous pick.
pub fn pick_peaks(env: &[f32], config: &OnsetConfig) -> Vec<usize> {
    let n = env.len();
    let window = |t: usize, pre: usize, post: usize| &env[t.saturating_sub(pre)..(t + post + 1).min(n)];
    let mut peaks: Vec<usize> = Vec::new();
    for t in 0..n {
        let x = env[t];
        if window(t, config.pre_max, config.post_max).iter().any(|&v| v > x) {
            continue;
        }
        let avg = window(t, config.pre_avg, config.post_avg);
        let mean = avg.iter().sum::<f32>() / avg.len() as f32;
        if x < mean + config.delta {
            continue;
        }
        if peaks.last().is_some_and(|&p| t - p < config.wait) {
            continue;
        }
        peaks.push(t);
    }
    peaks
}

/// Onset times in seconds, strictly increasing.
pub fn detect_onsets(clip: &AudioClip, config: &OnsetConfig) -> Result<Vec<f64>> {
    let env = onset_envelope(clip, config)?;
    let mut peaks = pick_peaks(&env, config);
    peaks.dedup();
    Ok(peaks.into_iter().map(|t| t as f64 / config.frame_rate).collect())
}

pub fn absm_filter(clip: &AudioClip) -> Result<bool> {
    Ok(mean_abs_magnitude(clip)? >= ABSM_THRESHOLD)
}

pub fn osfq_filter(clip: &AudioClip, config: &OnsetConfig) -> Result<bool> {
    let mean_abs = mean_abs_magnitude(clip)?;
    if mean_abs < OSFQ_ENERGY_THRESHOLD {
        return Ok(false);
    }
    let rate = detect_onsets(clip, config)?.len() as f64 / clip.duration();
    Ok(rate >= OSFQ_RATE_THRESHOLD)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionRule {
    Absm,
    Osfq,
}

impl std::str::FromStr for SelectionRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "absm" => Ok(Self::Absm),
            "osfq" => Ok(Self::Osfq),
            other => Err(Error::Config(format!("unknown selection rule `{other}` (absm|osfq)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StemDecision {
    pub stem_id: String,
    pub mean_abs: f64,
    /// Onsets per second over the whole clip.
    pub onset_rate: f64,
    pub passed_absm: bool,
    pub passed_osfq: bool,
}

impl StemDecision {
    pub fn passed(&self, rule: SelectionRule) -> bool {
        match rule {
            SelectionRule::Absm => self.passed_absm,
            SelectionRule::Osfq => self.passed_osfq,
        }
    }
}

/// Both filters on one clip.
pub fn decide(stem_id: impl Into<String>, clip: &AudioClip, config: &OnsetConfig) -> Result<StemDecision> {
    let mean_abs = mean_abs_magnitude(clip)?;
    let onset_rate = detect_onsets(clip, config)?.len() as f64 / clip.duration();
    Ok(StemDecision {
        stem_id: stem_id.into(),
        mean_abs,
        onset_rate,
        passed_absm: mean_abs >= ABSM_THRESHOLD,
        passed_osfq: mean_abs >= OSFQ_ENERGY_THRESHOLD && onset_rate >= OSFQ_RATE_THRESHOLD,
    })
}

/// Thresholds in force, written next to every set of decisions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionThresholds {
    pub absm: f64,
    pub osfq_energy: f64,
    pub osfq_onset_rate: f64,
}

impl Default for SelectionThresholds {
    fn default() -> Self {
        Self {
            absm: ABSM_THRESHOLD,
            osfq_energy: OSFQ_ENERGY_THRESHOLD,
            osfq_onset_rate: OSFQ_RATE_THRESHOLD,
        }
    }
}

/// Audio is read, mixed to mono and scaled into [-1, 1] only when it exceeds full scale.
pub const NORMALIZATION: &str = "peak-limited to [-1, 1]";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub version: u32,
    pub rule: SelectionRule,
    pub thresholds: SelectionThresholds,
    pub onset: OnsetConfig,
    pub normalization: String,
    pub decisions: Vec<StemDecision>,
}

impl SelectionReport {
    pub fn kept(&self) -> impl Iterator<Item = &StemDecision> {
        self.decisions.iter().filter(|d| d.passed(self.rule))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// Decisions for every `*.wav` directly inside `dir`, ordered by file name.
pub fn select_stems(dir: &Path, rule: SelectionRule, config: &OnsetConfig) -> Result<SelectionReport> {
    let mut paths = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")) {
            paths.push(path);
        }
    }
    if paths.is_empty() {
        return Err(Error::EmptyInput(format!("no .wav files in {}", dir.display())));
    }
    paths.sort();
    let decisions = paths
        .par_iter()
        .map(|p| {
            let clip = AudioClip::load(p)?;
            let id = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            decide(id, &clip, config)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SelectionReport {
        version: 1,
        rule,
        thresholds: SelectionThresholds::default(),
        onset: *config,
        normalization: NORMALIZATION.into(),
        decisions,
    })
}
