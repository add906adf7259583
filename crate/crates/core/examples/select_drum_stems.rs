//! ABSM and OSFQ decisions for synthetic drum stems: a regular drum part, a
//! silent part, a near-silent part and a loud stem with a single hit.

use beatforge::audio::AudioClip;
use beatforge::selection::{decide, OnsetConfig, SelectionRule};
use beatforge::synth::{synth_song, SynthConfig};

fn main() -> beatforge::error::Result<()> {
    let cfg = OnsetConfig::default();
    let sr = 44_100;
    let song = synth_song(2, false, &SynthConfig::default())?;
    let drums = song.stems["drums"].clone();
    let quiet = AudioClip::new(drums.samples().iter().map(|s| s * 0.005).collect(), sr, "quiet")?;
    let mut lone = vec![0.0f32; 10 * sr as usize];
    for (i, s) in lone.iter_mut().enumerate() {
        let t = i as f64 / sr as f64;
        *s = (0.3 * (2.0 * std::f64::consts::PI * 110.0 * t).sin()) as f32;
    }
    for (i, s) in lone[sr as usize..].iter_mut().take(4410).enumerate() {
        *s += (0.6 * (-(i as f64) / 600.0).exp() * (i as f64 * 0.9).sin()) as f32;
    }
    let stems = [
        ("drums", drums),
        ("silent", AudioClip::silence(10 * sr as usize, sr)),
        ("quiet", quiet),
        ("one-hit", AudioClip::new(lone, sr, "one-hit")?),
    ];
    println!("{:<8} {:>9} {:>11} {:>5} {:>5}", "stem", "mean|x|", "onsets/s", "ABSM", "OSFQ");
    for (name, clip) in &stems {
        let d = decide(*name, clip, &cfg)?;
        let mark = |r| if d.passed(r) { "keep" } else { "drop" };
        println!("{:<8} {:>9.5} {:>11.2} {:>5} {:>5}", name, d.mean_abs, d.onset_rate, mark(SelectionRule::Absm), mark(SelectionRule::Osfq));
    }
    Ok(())
}
