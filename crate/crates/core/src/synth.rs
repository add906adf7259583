//! Synthetic songs with beats known by construction.
//!
//! Each song has a drum stem (accented kick on downbeats, lighter hits on the
//! other beats, off-beat hats), a bass stem holding one note per bar and an
//! "other" stem with one chord tone per beat. Drumless songs keep a silent
//! drum stem.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::augment::{ANNOTATION_FILE, MIX_FILE, STEM_DIR};
use crate::beats::{BeatAnnotation, BeatEvent};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub sample_rate: u32,
    /// Clip length in seconds.
    pub duration: f64,
    pub min_bpm: f64,
    pub max_bpm: f64,
    pub meters: Vec<u32>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            sample_rate: 44_100,
            duration: 10.0,
            min_bpm: 70.0,
            max_bpm: 180.0,
            meters: vec![3, 4],
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSong {
    pub song_id: String,
    pub meter: u32,
    pub bpm: f64,
    pub drumless: bool,
    pub mix: AudioClip,
    pub stems: BTreeMap<String, AudioClip>,
    pub annotation: BeatAnnotation,
}

fn add_note(buf: &mut [f32], sr: f64, start: f64, len: f64, freq: f64, amp: f64, decay: f64) {
    let s0 = (start * sr).round() as usize;
    let n = (len * sr) as usize;
    let attack = 0.005 * sr;
    for k in 0..n {
        let Some(slot) = buf.get_mut(s0 + k) else { break };
        let t = k as f64 / sr;
        let env = (k as f64 / attack).min(1.0) * (-t / decay).exp();
        let tone = (2.0 * PI * freq * t).sin() + 0.3 * (4.0 * PI * freq * t).sin();
        *slot += (amp * env * tone) as f32;
    }
}

fn add_hit<R: Rng>(buf: &mut [f32], sr: f64, start: f64, amp: f64, body_hz: f64, noise: f64, decay: f64, rng: &mut R) {
    let s0 = (start * sr).round() as usize;
    let n = (6.0 * decay * sr) as usize;
    for k in 0..n {
        let Some(slot) = buf.get_mut(s0 + k) else { break };
        let t = k as f64 / sr;
        let env = (-t / decay).exp();
        // pitch drops quickly like a kick
        let phase = 2.0 * PI * body_hz * (t + 0.01 * (1.0 - (-t / 0.01).exp()));
        let v = (1.0 - noise) * phase.sin() + noise * rng.gen_range(-1.0..1.0);
        *slot += (amp * env * v) as f32;
    }
}

/// Generates song number `index`. Songs are independent of each other: the
/// same index and seed always give the same song.
pub fn synth_song(index: usize, drumless: bool, config: &SynthConfig) -> Result<SynthSong> {
    if config.meters.is_empty() || !(config.min_bpm > 0.0 && config.max_bpm >= config.min_bpm) || !(config.duration > 1.0) {
        return Err(Error::Config("synth: need meters, 0 < min_bpm <= max_bpm and duration > 1 s".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_mul(1_000_003).wrapping_add(index as u64));
    let sr = config.sample_rate as f64;
    let n = (config.duration * sr) as usize;
    let meter = config.meters[index % config.meters.len()];
    let bpm = rng.gen_range(config.min_bpm..=config.max_bpm);
    let period = 60.0 / bpm;
    let first = rng.gen_range(0.1..0.1 + period);
    let first_position = rng.gen_range(1..=meter);

    let mut beats = Vec::new();
    let mut t = first;
    let mut pos = first_position;
    while t < config.duration - 0.05 {
        beats.push(BeatEvent::new((t * 1000.0).round() / 1000.0, pos));
        t += period;
        pos = pos % meter + 1;
    }

    let mut drums = vec![0.0f32; n];
    let mut bass = vec![0.0f32; n];
    let mut other = vec![0.0f32; n];
    let root = 55.0 * 2f64.powf(rng.gen_range(0..12) as f64 / 12.0);
    let scale = [0, 2, 4, 5, 7, 9, 11, 12];
    let drum_gain = rng.gen_range(0.6..0.9);
    for (k, b) in beats.iter().enumerate() {
        let down = b.is_downbeat();
        if !drumless {
            if down {
                add_hit(&mut drums, sr, b.time, drum_gain, 60.0, 0.15, 0.06, &mut rng);
            } else {
                add_hit(&mut drums, sr, b.time, 0.55 * drum_gain, 180.0, 0.6, 0.04, &mut rng);
            }
            add_hit(&mut drums, sr, b.time + period / 2.0, 0.12, 6000.0, 0.95, 0.01, &mut rng);
        }
        if down {
            let degree = scale[rng.gen_range(0..scale.len())] as f64;
            let f = root * 2f64.powf(degree / 12.0);
            add_note(&mut bass, sr, b.time, meter as f64 * period, f, 0.35, 0.8 * meter as f64 * period);
        }
        let degree = scale[(k * 3 + rng.gen_range(0..3)) % scale.len()] as f64;
        let f = 4.0 * root * 2f64.powf(degree / 12.0);
        let amp = if down { 0.22 } else { 0.13 };
        add_note(&mut other, sr, b.time, period, f, amp, 0.35 * period);
    }

    let mix: Vec<f32> = (0..n)
        .map(|i| (drums[i] + bass[i] + other[i]).clamp(-1.0, 1.0))
        .collect();
    let song_id = format!("synth{index:03}");
    let clip = |v: Vec<f32>, name: &str| AudioClip::new(v, config.sample_rate, format!("{song_id}/{name}"));
    let mut stems = BTreeMap::new();
    stems.insert("drums".to_string(), clip(drums, "drums")?);
    stems.insert("bass".to_string(), clip(bass, "bass")?);
    stems.insert("other".to_string(), clip(other, "other")?);
    Ok(SynthSong {
        mix: clip(mix, "mix")?,
        annotation: BeatAnnotation::new(beats)?,
        song_id,
        meter,
        bpm,
        drumless,
        stems,
    })
}

impl SynthSong {
    /// Writes `<dir>/mix.wav`, `<dir>/stems/*.wav` and `<dir>/beats.txt`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let stem_dir = dir.join(STEM_DIR);
        std::fs::create_dir_all(&stem_dir).map_err(|e| Error::io(&stem_dir, e))?;
        self.mix.write_wav(dir.join(MIX_FILE))?;
        for (name, clip) in &self.stems {
            clip.write_wav(stem_dir.join(format!("{name}.wav")))?;
        }
        self.annotation.write(&dir.join(ANNOTATION_FILE))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSummary {
    pub song_id: String,
    pub dataset: String,
    pub meter: u32,
    pub bpm: f64,
    pub drumless: bool,
}

/// Writes a corpus of `<root>/<dataset>/<song>` directories: `drummed` songs
/// under `band/` and `drumless` songs under `ensemble/`. Splits are drawn per
/// dataset, so both kinds reach every split.
pub fn write_corpus(root: &Path, drummed: usize, drumless: usize, config: &SynthConfig) -> Result<Vec<SynthSummary>> {
    use rayon::prelude::*;
    let plan: Vec<(usize, bool)> = (0..drummed + drumless).map(|i| (i, i >= drummed)).collect();
    plan.par_iter()
        .map(|&(i, no_drums)| {
            let song = synth_song(i, no_drums, config)?;
            let dataset = if no_drums { "ensemble" } else { "band" };
            song.write(&root.join(dataset).join(&song.song_id))?;
            Ok(SynthSummary {
                song_id: song.song_id,
                dataset: dataset.into(),
                meter: song.meter,
                bpm: song.bpm,
                drumless: no_drums,
            })
        })
        .collect()
}
