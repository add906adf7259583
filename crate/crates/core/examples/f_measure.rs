//! Beat and downbeat F-measure of an estimate against a reference at the
//! 70 ms tolerance window, including an estimate that is off by one beat.

use beatforge::beats::{BeatAnnotation, BeatEvent, BeatSequence};
use beatforge::eval::{evaluate_clip, f_measure, EvalConfig};

fn main() -> beatforge::error::Result<()> {
    let cfg = EvalConfig::default();
    let refs: Vec<BeatEvent> = (0..16).map(|k| BeatEvent::new(0.5 + 0.5 * k as f64, k % 4 + 1)).collect();
    let annotation = BeatAnnotation::new(refs.clone())?;

    let jittered: Vec<f64> = annotation.times().iter().enumerate().map(|(k, t)| t + 0.02 * ((k % 5) as f64 - 2.0)).collect();
    let s = f_measure(&jittered, &annotation.times(), &cfg)?;
    println!("jitter <= 40 ms: F {:.3} (P {:.3}, R {:.3})", s.f1, s.precision, s.recall);

    let late: Vec<f64> = annotation.times().iter().map(|t| t + 0.071).collect();
    println!("all late by 71 ms: F {:.3}", f_measure(&late, &annotation.times(), &cfg)?.f1);

    let shifted = BeatSequence {
        events: refs.iter().map(|e| BeatEvent::new(e.time, (e.bar_position + 2) % 4 + 1)).collect(),
        meter: 4,
    };
    let c = evaluate_clip(&shifted, &annotation, &cfg)?;
    println!("bar phase off by one beat: beat F {:.3}, downbeat F {:.3}", c.beat.f1, c.downbeat.f1);
    Ok(())
}
