use serde::{Deserialize, Serialize};

use super::viterbi::Transitions;
use crate::error::{Error, Result};

/// Smallest likelihood an observation can have, so every path stays feasible.
pub const OBSERVATION_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoderConfig {
    /// Allowed bar lengths in beats; each must be 3 or 4.
    pub beats_per_bar: Vec<u32>,
    pub min_bpm: f64,
    pub max_bpm: f64,
    /// Geometrically spaced tempi between `min_bpm` and `max_bpm`
    /// (a single level sits at `min_bpm`).
    pub tempo_levels: usize,
    pub transition_lambda: f64,
    /// Leading fraction of each beat treated as the beat region.
    pub observation_weight: f64,
    pub frame_rate: f64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            beats_per_bar: vec![3, 4],
            min_bpm: 55.0,
            max_bpm: 215.0,
            tempo_levels: 60,
            transition_lambda: 100.0,
            observation_weight: 1.0 / 16.0,
            frame_rate: 100.0,
        }
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("decoder: {m}")));
        if self.beats_per_bar.is_empty() || self.beats_per_bar.iter().any(|m| !matches!(m, 3 | 4)) {
            return bad(format!("beats_per_bar must be a non-empty subset of {{3, 4}}, got {:?}", self.beats_per_bar));
        }
        if !(self.min_bpm > 0.0 && self.min_bpm < self.max_bpm) {
            return bad(format!("need 0 < min_bpm < max_bpm, got {}..{}", self.min_bpm, self.max_bpm));
        }
        if self.tempo_levels == 0 {
            return bad("tempo_levels must be at least 1".into());
        }
        if !(self.transition_lambda > 0.0) {
            return bad("transition_lambda must be positive".into());
        }
        if !(self.observation_weight > 0.0 && self.observation_weight <= 1.0) {
            return bad("observation_weight must lie in (0, 1]".into());
        }
        if !(self.frame_rate > 0.0) {
            return bad("frame_rate must be positive".into());
        }
        Ok(())
    }

    /// Sorted distinct beat intervals in frames, fastest tempo first.
    pub fn intervals(&self) -> Result<Vec<usize>> {
        self.validate()?;
        let mut out: Vec<usize> = (0..self.tempo_levels)
            .map(|k| {
                let bpm = if self.tempo_levels == 1 {
                    self.min_bpm
                } else {
                    let frac = k as f64 / (self.tempo_levels - 1) as f64;
                    self.min_bpm * (self.max_bpm / self.min_bpm).powf(frac)
                };
                (60.0 * self.frame_rate / bpm).round() as usize
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        if out[0] < 2 {
            return Err(Error::Config(format!(
                "decoder: {} BPM is too fast to represent at {} frames/s",
                self.max_bpm, self.frame_rate
            )));
        }
        Ok(out)
    }
}

/// Observation class of a state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Downbeat,
    Beat,
    NonBeat,
}

/// One bar-pointer state: meter, tempo, and position within the bar in frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BarState {
    pub meter: u32,
    pub tempo: usize,
    /// Beat interval in frames.
    pub interval: usize,
    /// Frames since the start of the bar, `0..meter * interval`.
    pub position: usize,
}

impl BarState {
    pub fn beat_index(&self) -> usize {
        self.position / self.interval
    }

    pub fn position_in_beat(&self) -> usize {
        self.position % self.interval
    }

    /// Position in beat units, in `[0, meter)`.
    pub fn phase(&self) -> f64 {
        self.position as f64 / self.interval as f64
    }
}

/// Bar-pointer HMM: the disjoint union of one sub-space per allowed meter.
///
/// Inside a beat the position advances one frame at a time with probability 1.
/// From the last frame of a beat the chain enters the first frame of the next
/// beat (wrapping at the bar) at any tempo, with weights
/// `exp(-lambda * |ln(interval' / interval)|)` normalized per state. Meters
/// never mix.
#[derive(Debug, Clone)]
pub struct StateSpace {
    config: DecoderConfig,
    states: Vec<BarState>,
    regions: Vec<Region>,
    transitions: Transitions,
    initial: Vec<f64>,
}

impl StateSpace {
    pub fn build(config: &DecoderConfig) -> Result<Self> {
        let intervals = config.intervals()?;
        let mut meters = config.beats_per_bar.clone();
        meters.sort_unstable();
        meters.dedup();

        let mut states = Vec::new();
        // first state index of (meter slot, tempo)
        let mut starts: Vec<Vec<usize>> = Vec::new();
        for &m in &meters {
            let mut s = Vec::new();
            for (tempo, &interval) in intervals.iter().enumerate() {
                s.push(states.len());
                for position in 0..m as usize * interval {
                    states.push(BarState {
                        meter: m,
                        tempo,
                        interval,
                        position,
                    });
                }
            }
            starts.push(s);
        }

        let weight = config.observation_weight;
        let regions = states
            .iter()
            .map(|s| {
                if (s.position_in_beat() as f64) < s.interval as f64 * weight {
                    if s.beat_index() == 0 {
                        Region::Downbeat
                    } else {
                        Region::Beat
                    }
                } else {
                    Region::NonBeat
                }
            })
            .collect();

        // Normalized tempo-change log-probabilities, one row per source tempo.
        let tempo_change: Vec<Vec<f64>> = intervals
            .iter()
            .map(|&from| {
                let raw: Vec<f64> = intervals
                    .iter()
                    .map(|&to| -config.transition_lambda * (to as f64 / from as f64).ln().abs())
                    .collect();
                let max = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let log_z = max + raw.iter().map(|r| (r - max).exp()).sum::<f64>().ln();
                raw.iter().map(|r| r - log_z).collect()
            })
            .collect();

        let mut triples = Vec::with_capacity(states.len() + meters.len() * intervals.len() * intervals.len() * 4);
        for (idx, s) in states.iter().enumerate() {
            if s.position_in_beat() + 1 < s.interval {
                triples.push((idx, idx + 1, 0.0));
                continue;
            }
            let slot = meters.iter().position(|&m| m == s.meter).expect("meter present");
            let next_beat = (s.beat_index() + 1) % s.meter as usize;
            for (to_tempo, &to_interval) in intervals.iter().enumerate() {
                let lp = tempo_change[s.tempo][to_tempo];
                if lp == f64::NEG_INFINITY {
                    continue;
                }
                triples.push((idx, starts[slot][to_tempo] + next_beat * to_interval, lp));
            }
        }
        let n = states.len();
        let transitions = Transitions::from_triples(n, triples)?;
        Ok(Self {
            config: config.clone(),
            states,
            regions,
            transitions,
            initial: vec![-(n as f64).ln(); n],
        })
    }

    pub fn config(&self) -> &DecoderConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, idx: usize) -> BarState {
        self.states[idx]
    }

    pub fn states(&self) -> &[BarState] {
        &self.states
    }

    pub fn region(&self, idx: usize) -> Region {
        self.regions[idx]
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn transitions(&self) -> &Transitions {
        &self.transitions
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    /// Observation log-likelihood of one activation row under a state's region.
    pub fn observation_logprob(&self, row: &[f32; 3], idx: usize) -> f64 {
        observation_logprob(row, self.regions[idx], self.config.observation_weight)
    }
}

/// Log-likelihood of an activation row `(beat, downbeat, non-beat)` in a region.
///
/// Beat-region states score the beat (or downbeat) probability directly;
/// non-beat states share the non-beat probability over the `1/weight - 1`
/// times larger remainder of the beat. Everything is floored at 1e-10.
pub fn observation_logprob(row: &[f32; 3], region: Region, observation_weight: f64) -> f64 {
    let p = match region {
        Region::Downbeat => row[1] as f64,
        Region::Beat => row[0] as f64,
        Region::NonBeat => {
            let spread = 1.0 / observation_weight - 1.0;
            if spread > 0.0 {
                row[2] as f64 / spread
            } else {
                row[2] as f64
            }
        }
    };
    p.max(OBSERVATION_FLOOR).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(meter: u32, bpm: f64) -> DecoderConfig {
        DecoderConfig {
            beats_per_bar: vec![meter],
            min_bpm: bpm,
            max_bpm: bpm * 1.5,
            tempo_levels: 1,
            ..Default::default()
        }
    }

    #[test]
    fn one_tempo_one_meter_is_a_cycle() {
        for (m, bpm) in [(4, 120.0), (3, 97.0), (4, 61.0)] {
            let space = StateSpace::build(&single(m, bpm)).unwrap();
            assert_eq!(space.len(), m as usize * (100.0 * 60.0 / bpm).round() as usize);
            let deg = space.transitions().out_degree();
            assert!(deg.iter().all(|&d| d == 1));
            // Following the unique successor returns to the start after len steps.
            let mut s = 0;
            for _ in 0..space.len() {
                s = (0..space.len())
                    .find(|&j| space.transitions().incoming(j).any(|(src, _)| src == s))
                    .unwrap();
            }
            assert_eq!(s, 0);
        }
    }

    #[test]
    fn every_row_normalizes() {
        let space = StateSpace::build(&DecoderConfig::default()).unwrap();
        for (s, mass) in space.transitions().outgoing_mass().iter().enumerate() {
            assert!((mass - 1.0).abs() < 1e-9, "state {s}: {mass}");
        }
        assert!(space.transitions().out_degree().iter().all(|&d| d >= 1));
    }

    #[test]
    fn meters_form_a_disjoint_union() {
        let both = StateSpace::build(&DecoderConfig::default()).unwrap();
        let three = StateSpace::build(&DecoderConfig {
            beats_per_bar: vec![3],
            ..Default::default()
        })
        .unwrap();
        let four = StateSpace::build(&DecoderConfig {
            beats_per_bar: vec![4],
            ..Default::default()
        })
        .unwrap();
        assert_eq!(both.len(), three.len() + four.len());
        for j in 0..both.len() {
            for (src, _) in both.transitions().incoming(j) {
                assert_eq!(both.state(src).meter, both.state(j).meter);
            }
        }
    }

    #[test]
    fn tempo_changes_only_at_beat_boundaries() {
        let space = StateSpace::build(&DecoderConfig::default()).unwrap();
        for j in 0..space.len() {
            for (src, _) in space.transitions().incoming(j) {
                let (a, b) = (space.state(src), space.state(j));
                if a.tempo != b.tempo {
                    assert_eq!(a.position_in_beat() + 1, a.interval);
                    assert_eq!(b.position_in_beat(), 0);
                }
            }
        }
    }

    #[test]
    fn unrepresentable_tempo_is_config_error() {
        let cfg = DecoderConfig {
            max_bpm: 5000.0,
            ..Default::default()
        };
        assert_eq!(StateSpace::build(&cfg).unwrap_err().kind(), "ConfigError");
        let cfg = DecoderConfig {
            beats_per_bar: vec![5],
            ..Default::default()
        };
        assert!(StateSpace::build(&cfg).is_err());
    }

    #[test]
    fn observation_examples() {
        let w = 1.0 / 16.0;
        let certain_down = [0.0f32, 1.0, 0.0];
        assert_eq!(observation_logprob(&certain_down, Region::Downbeat, w), 0.0);
        assert_eq!(observation_logprob(&certain_down, Region::NonBeat, w), OBSERVATION_FLOOR.ln());

        let row = [0.7f32, 0.1, 0.2];
        assert!((observation_logprob(&row, Region::Beat, w) - 0.7f32.ln() as f64).abs() < 1e-7);
        assert!((observation_logprob(&row, Region::NonBeat, w) - (0.2f32 as f64 / 15.0).ln()).abs() < 1e-12);

        let uniform = [1.0f32 / 3.0; 3];
        let scores: Vec<f64> = [Region::Downbeat, Region::Beat, Region::NonBeat]
            .iter()
            .map(|&r| observation_logprob(&uniform, r, w))
            .collect();
        let spread = scores.iter().cloned().fold(f64::MIN, f64::max) - scores.iter().cloned().fold(f64::MAX, f64::min);
        assert!((spread - 15f64.ln()).abs() < 1e-9);
    }
}
