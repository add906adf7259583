//! Bar-pointer HMM that turns beat/downbeat activations into beat events.

mod state_space;
mod tune;
mod viterbi;

pub use state_space::{observation_logprob, BarState, DecoderConfig, Region, StateSpace, OBSERVATION_FLOOR};
pub use tune::{tune, DecoderGrid, TuneResult};
pub use viterbi::{viterbi_decode, Transitions};

use crate::beats::{BeatEvent, BeatSequence};
use crate::error::{Error, Result};
use crate::net::ActivationSequence;

/// Most likely state path for an activation sequence.
pub fn viterbi(activations: &ActivationSequence, space: &StateSpace) -> Result<Vec<usize>> {
    if activations.frames() == 0 {
        return Err(Error::EmptyInput("no activation frames to decode".into()));
    }
    let w = space.config().observation_weight;
    let regions = space.regions();
    let (path, _) = viterbi_decode(space.transitions(), space.initial(), activations.frames(), |t, out| {
        let row = &activations.rows[t];
        let scores = [
            observation_logprob(row, Region::Downbeat, w),
            observation_logprob(row, Region::Beat, w),
            observation_logprob(row, Region::NonBeat, w),
        ];
        for (o, r) in out.iter_mut().zip(regions) {
            *o = match r {
                Region::Downbeat => scores[0],
                Region::Beat => scores[1],
                Region::NonBeat => scores[2],
            };
        }
    })?;
    Ok(path)
}

/// Visits of the path to beat regions as `(first frame, last frame, state at entry)`.
fn region_visits(path: &[usize], space: &StateSpace) -> Vec<(usize, usize, usize)> {
    let in_region = |s: usize| space.region(s) != Region::NonBeat;
    let mut visits: Vec<(usize, usize, usize)> = Vec::new();
    for (t, &s) in path.iter().enumerate() {
        if !in_region(s) {
            continue;
        }
        let st = space.state(s);
        let entered = match t {
            0 => st.position_in_beat() == 0,
            _ => {
                let p = path[t - 1];
                !in_region(p) || space.state(p).beat_index() != st.beat_index()
            }
        };
        if entered {
            visits.push((t, t, s));
        } else if let Some(v) = visits.last_mut().filter(|v| v.1 + 1 == t) {
            v.1 = t;
        }
    }
    visits
}

fn events_from(visits: &[(usize, usize, usize)], path: &[usize], space: &StateSpace, frame_rate: f64, pick: impl Fn(usize, usize) -> usize) -> BeatSequence {
    let events = visits
        .iter()
        .map(|&(first, last, s)| BeatEvent::new(pick(first, last) as f64 / frame_rate, space.state(s).beat_index() as u32 + 1))
        .collect();
    let meter = path.first().map_or(0, |&s| space.state(s).meter);
    BeatSequence { events, meter }
}

/// One event for every entry into a beat region, at the frame of entry;
/// repeated frames inside the same region do not produce more events. A path
/// that starts inside a region (rather than at its first frame) does not
/// count as entering it.
pub fn path_to_events(path: &[usize], space: &StateSpace, frame_rate: f64) -> BeatSequence {
    events_from(&region_visits(path, space), path, space, frame_rate, |first, _| first)
}

/// Like [`path_to_events`], but each event sits on the frame of highest
/// beat-plus-downbeat activation within its region visit. Every frame of a
/// region scores the same, so the entry frame alone is only known up to the
/// region width.
pub fn path_to_peak_events(path: &[usize], space: &StateSpace, activations: &ActivationSequence) -> BeatSequence {
    let rows = &activations.rows;
    events_from(&region_visits(path, space), path, space, activations.frame_rate as f64, |first, last| {
        let mut best = first;
        for t in first..=last {
            if rows[t][0] + rows[t][1] > rows[best][0] + rows[best][1] {
                best = t;
            }
        }
        best
    })
}

/// Viterbi decoding followed by peak-aligned event extraction.
pub fn decode(activations: &ActivationSequence, space: &StateSpace) -> Result<BeatSequence> {
    let path = viterbi(activations, space)?;
    Ok(path_to_peak_events(&path, space, activations))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cycle_config(meter: u32, bpm: f64) -> DecoderConfig {
        DecoderConfig {
            beats_per_bar: vec![meter],
            min_bpm: bpm,
            max_bpm: bpm * 2.0,
            tempo_levels: 1,
            ..Default::default()
        }
    }

    #[test]
    fn path_without_beat_crossing_has_no_events() {
        let space = StateSpace::build(&cycle_config(4, 120.0)).unwrap();
        let path: Vec<usize> = (10..40).collect();
        assert!(path_to_events(&path, &space, 100.0).events.is_empty());
    }

    #[test]
    fn cyclic_path_at_120_bpm() {
        let space = StateSpace::build(&cycle_config(4, 120.0)).unwrap();
        assert_eq!(space.len(), 200);
        let path: Vec<usize> = (0..450).map(|t| t % 200).collect();
        let seq = path_to_events(&path, &space, 100.0);
        assert_eq!(seq.meter, 4);
        let times: Vec<f64> = seq.events.iter().map(|e| e.time).collect();
        let expected: Vec<f64> = (0..9).map(|k| k as f64 * 0.5).collect();
        assert_eq!(times.len(), expected.len());
        for (a, b) in times.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
        let positions: Vec<u32> = seq.events.iter().map(|e| e.bar_position).collect();
        assert_eq!(positions, vec![1, 2, 3, 4, 1, 2, 3, 4, 1]);
    }

    #[test]
    fn adjacent_frames_in_one_region_give_one_event() {
        let space = StateSpace::build(&cycle_config(4, 120.0)).unwrap();
        // Region of a 50-frame beat at weight 1/16 spans positions 0..=3.
        let path = vec![48, 49, 50, 51, 52, 53, 54];
        let seq = path_to_events(&path, &space, 100.0);
        assert_eq!(seq.events.len(), 1);
        assert_eq!(seq.events[0].bar_position, 2);
        assert!((seq.events[0].time - 0.02).abs() < 1e-12);
    }

    #[test]
    fn single_cycle_decodes_the_forced_path() {
        let space = StateSpace::build(&cycle_config(3, 100.0)).unwrap();
        let rows = vec![[0.2f32, 0.3, 0.5]; 400];
        let acts = ActivationSequence { rows, frame_rate: 100.0 };
        let path = viterbi(&acts, &space).unwrap();
        for w in path.windows(2) {
            assert_eq!(w[1], (w[0] + 1) % space.len());
        }
    }

    /// Peaky activations for a steady pulse starting at 0.3 s.
    pub(crate) fn click_activations(bpm: f64, meter: u32, frames: usize) -> (ActivationSequence, Vec<BeatEvent>) {
        let mut rows = vec![[0.02f32, 0.02, 0.96]; frames];
        let mut truth = Vec::new();
        for k in 0.. {
            let f = (30.0 + k as f64 * 6000.0 / bpm).round() as usize;
            if f >= frames {
                break;
            }
            let pos = k % meter + 1;
            rows[f] = if pos == 1 { [0.04, 0.92, 0.04] } else { [0.92, 0.04, 0.04] };
            truth.push(BeatEvent::new(f as f64 / 100.0, pos));
        }
        (ActivationSequence { rows, frame_rate: 100.0 }, truth)
    }

    #[test]
    fn clicks_at_120_bpm_decode_within_one_frame() {
        let space = StateSpace::build(&DecoderConfig::default()).unwrap();
        let (acts, truth) = click_activations(120.0, 4, 1200);
        let seq = decode(&acts, &space).unwrap();
        assert_eq!(seq.events.len(), truth.len());
        for (e, t) in seq.events.iter().zip(&truth) {
            assert!((e.time - t.time).abs() <= 0.0100001, "{} vs {}: {:?} {:?}", e.time, t.time, seq.times(), space.config().intervals());
            assert_eq!(e.bar_position, t.bar_position);
        }
    }

    #[test]
    fn meter_follows_downbeat_spacing() {
        let space = StateSpace::build(&DecoderConfig::default()).unwrap();
        for (meter, bpm) in [(3, 96.0), (4, 96.0), (3, 150.0), (4, 75.0)] {
            let (acts, _) = click_activations(bpm, meter, 1500);
            let seq = decode(&acts, &space).unwrap();
            assert_eq!(seq.meter, meter, "{bpm} BPM");
            let downbeats = seq.events.iter().filter(|e| e.is_downbeat()).count();
            assert_eq!(downbeats, seq.downbeat_times().len());
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn rows() -> impl Strategy<Value = Vec<[f32; 3]>> {
            proptest::collection::vec((0.01f32..1.0, 0.01f32..1.0, 0.01f32..1.0), 150..400)
                .prop_map(|v| v.into_iter().map(|(a, b, c)| [a, b, c]).collect())
        }

        fn normalize(r: [f32; 3]) -> [f32; 3] {
            let s = r[0] + r[1] + r[2];
            [r[0] / s, r[1] / s, r[2] / s]
        }

        fn small_space() -> StateSpace {
            StateSpace::build(&DecoderConfig {
                min_bpm: 60.0,
                max_bpm: 180.0,
                tempo_levels: 8,
                ..Default::default()
            })
            .unwrap()
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(12))]

            #[test]
            fn intervals_stay_in_tempo_range(rows in rows()) {
                let space = small_space();
                let acts = ActivationSequence { rows: rows.into_iter().map(normalize).collect(), frame_rate: 100.0 };
                let path = viterbi(&acts, &space).unwrap();
                let (lo, hi) = (60.0 / 180.0, 60.0 / 60.0);
                // Entry frames: one frame of rounding. Peak-aligned: also the region width.
                let slack_entry = 0.01 + 1e-9;
                let widest = *space.config().intervals().unwrap().last().unwrap() as f64;
                let slack_peak = slack_entry + (widest * space.config().observation_weight).ceil() / 100.0;
                for (seq, slack) in [
                    (path_to_events(&path, &space, 100.0), slack_entry),
                    (path_to_peak_events(&path, &space, &acts), slack_peak),
                ] {
                    for w in seq.events.windows(2) {
                        let ibi = w[1].time - w[0].time;
                        prop_assert!(ibi >= lo - slack && ibi <= hi + slack, "ibi {}", ibi);
                    }
                    let beats = seq.times();
                    prop_assert!(seq.downbeat_times().iter().all(|d| beats.contains(d)));
                }
            }

            #[test]
            fn row_scaling_does_not_change_the_path(rows in rows(), c in 0.1f32..10.0) {
                let space = small_space();
                let a = ActivationSequence { rows: rows.iter().copied().map(normalize).collect(), frame_rate: 100.0 };
                let scaled = rows.iter().map(|r| normalize([r[0] * c, r[1] * c, r[2] * c])).collect();
                let b = ActivationSequence { rows: scaled, frame_rate: 100.0 };
                prop_assert_eq!(viterbi(&a, &space).unwrap(), viterbi(&b, &space).unwrap());
            }
        }
    }
}

