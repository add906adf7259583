//! Spectral features of a WAV file (or of a synthetic song when no path is
//! given): per-window band counts and a few summary statistics.

use beatforge::audio::AudioClip;
use beatforge::features::{extract_features, FeatureConfig};
use beatforge::synth::{synth_song, SynthConfig};

fn main() -> beatforge::error::Result<()> {
    let clip = match std::env::args().nth(1) {
        Some(path) => AudioClip::load(path)?,
        None => synth_song(0, false, &SynthConfig::default())?.mix,
    };
    let config = FeatureConfig::default();
    let features = extract_features(&clip, &config)?;
    println!("{:.2} s at {} Hz -> {} frames x {} dims at {} fps", clip.duration(), clip.sample_rate(), features.frames(), features.dims(), features.frame_rate);
    for (w, bands) in config.window_sizes.iter().zip(config.n_bands()?) {
        println!("  window {w:>5}: {bands} bands + {bands} positive differences");
    }
    let v = features.values.as_slice();
    let mean = v.iter().map(|&x| x as f64).sum::<f64>() / v.len() as f64;
    let max = v.iter().cloned().fold(f32::MIN, f32::max);
    println!("mean {mean:.4}, max {max:.4}");
    Ok(())
}
