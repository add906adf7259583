//! Bar-pointer decoding of hand-made activations: a 3/4 pulse at 100 BPM with
//! noisy peaks, decoded once with both meters allowed and once forced to 4/4.

use beatforge::hmm::{decode, DecoderConfig, StateSpace};
use beatforge::net::ActivationSequence;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> beatforge::error::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let frames = 1200;
    let mut rows: Vec<[f32; 3]> = (0..frames)
        .map(|_| {
            let b = rng.gen_range(0.0..0.08f32);
            [b, b / 4.0, 1.0 - 1.25 * b]
        })
        .collect();
    let period = 0.6;
    let mut k = 0;
    while ((0.4 + k as f64 * period) * 100.0).round() < frames as f64 {
        let f = ((0.4 + k as f64 * period) * 100.0).round() as usize;
        let p = rng.gen_range(0.6..0.85f32);
        // network peaks span about three frames
        for (df, scale) in [(0, 0.5), (1, 1.0), (2, 0.5)] {
            if let Some(r) = rows.get_mut(f + df - 1) {
                let q = p * scale;
                *r = if k % 3 == 0 { [0.1 * scale, q, 1.0 - q - 0.1 * scale] } else { [q, 0.05 * scale, 1.0 - q - 0.05 * scale] };
            }
        }
        k += 1;
    }
    let acts = ActivationSequence::new(rows, 100.0)?;

    for meters in [vec![3, 4], vec![4]] {
        let space = StateSpace::build(&DecoderConfig { beats_per_bar: meters.clone(), ..Default::default() })?;
        let beats = decode(&acts, &space)?;
        let ibi: Vec<f64> = beats.times().windows(2).map(|w| w[1] - w[0]).collect();
        println!(
            "meters {meters:?}: {} states, meter {}, {} beats, {} downbeats, mean IBI {:.3} s",
            space.len(),
            beats.meter,
            beats.events.len(),
            beats.downbeat_times().len(),
            ibi.iter().sum::<f64>() / ibi.len() as f64
        );
    }
    Ok(())
}
