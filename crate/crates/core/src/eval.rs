//! Beat and downbeat F-measure with a symmetric tolerance window, and
//! corpus-level reports.

use serde::{Deserialize, Serialize};

use crate::augment::Provenance;
use crate::beats::{BeatAnnotation, BeatSequence};
use crate::error::{Error, Result};

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Half-width of the matching window in seconds.
    pub tolerance_window: f64,
    /// Events before this time (seconds) are ignored on both sides.
    pub skip_intro: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            tolerance_window: 0.070,
            skip_intro: 0.0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance_window > 0.0) || !(self.skip_intro >= 0.0) {
            return Err(Error::Config("eval: tolerance_window must be positive, skip_intro non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MatchCounts {
    pub hits: usize,
    pub misses: usize,
    pub false_alarms: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FScore {
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub counts: MatchCounts,
}

/// Number of one-to-one matches between two sorted lists where `|e - r| <= tolerance`.
///
/// References are visited in order and each takes the earliest estimate still
/// unmatched inside its window. Estimates too early for the current reference
/// can never match a later one, so a single forward cursor suffices.
pub fn count_matches(estimates: &[f64], references: &[f64], tolerance: f64) -> usize {
    let mut hits = 0;
    let mut j = 0;
    for &r in references {
        while j < estimates.len() && estimates[j] < r - tolerance {
            j += 1;
        }
        if j < estimates.len() && (estimates[j] - r).abs() <= tolerance {
            hits += 1;
            j += 1;
        }
    }
    hits
}

fn check_sorted(xs: &[f64], what: &str) -> Result<()> {
    if xs.iter().any(|x| !x.is_finite()) || xs.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Input(format!("{what} must be finite and sorted ascending")));
    }
    Ok(())
}

pub fn f_measure(estimates: &[f64], references: &[f64], config: &EvalConfig) -> Result<FScore> {
    config.validate()?;
    check_sorted(estimates, "estimates")?;
    check_sorted(references, "references")?;
    let keep = |xs: &[f64]| -> Vec<f64> { xs.iter().copied().filter(|&x| x >= config.skip_intro).collect() };
    let (est, refs) = (keep(estimates), keep(references));
    if est.is_empty() && refs.is_empty() {
        return Ok(FScore {
            f1: 1.0,
            precision: 1.0,
            recall: 1.0,
            counts: MatchCounts::default(),
        });
    }
    let hits = count_matches(&est, &refs, config.tolerance_window);
    let precision = if est.is_empty() { 0.0 } else { hits as f64 / est.len() as f64 };
    let recall = if refs.is_empty() { 0.0 } else { hits as f64 / refs.len() as f64 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(FScore {
        f1,
        precision,
        recall,
        counts: MatchCounts {
            hits,
            misses: refs.len() - hits,
            false_alarms: est.len() - hits,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipScores {
    pub beat: FScore,
    pub downbeat: FScore,
}

impl ClipScores {
    /// Mean of beat and downbeat F1, the decoder tuning objective.
    pub fn combined(&self) -> f64 {
        0.5 * (self.beat.f1 + self.downbeat.f1)
    }
}

/// Beat F1 over all events, downbeat F1 over bar-position-1 events only.
pub fn evaluate_clip(estimate: &BeatSequence, annotation: &BeatAnnotation, config: &EvalConfig) -> Result<ClipScores> {
    Ok(ClipScores {
        beat: f_measure(&estimate.times(), &annotation.times(), config)?,
        downbeat: f_measure(&estimate.downbeat_times(), &annotation.downbeat_times(), config)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipReport {
    pub song_id: String,
    pub meter: Option<u32>,
    pub beat: FScore,
    pub downbeat: FScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedClip {
    pub song_id: String,
    pub error_kind: String,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CorpusMean {
    pub beat_f1: f64,
    pub beat_precision: f64,
    pub beat_recall: f64,
    pub downbeat_f1: f64,
    pub downbeat_precision: f64,
    pub downbeat_recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub version: u32,
    pub model: String,
    /// Always "per-clip mean": corpus scores average clip scores with equal weight.
    pub aggregation: String,
    pub config: EvalConfig,
    pub provenance: Option<Provenance>,
    pub mean: CorpusMean,
    pub clips: Vec<ClipReport>,
    pub skipped: Vec<SkippedClip>,
}

impl EvalReport {
    /// Assembles a report; clips and skips are ordered by song id.
    pub fn new(
        model: impl Into<String>,
        config: EvalConfig,
        provenance: Option<Provenance>,
        mut clips: Vec<ClipReport>,
        mut skipped: Vec<SkippedClip>,
    ) -> Self {
        clips.sort_by(|a, b| a.song_id.cmp(&b.song_id));
        skipped.sort_by(|a, b| a.song_id.cmp(&b.song_id));
        let n = clips.len().max(1) as f64;
        let mut mean = CorpusMean::default();
        for c in &clips {
            mean.beat_f1 += c.beat.f1 / n;
            mean.beat_precision += c.beat.precision / n;
            mean.beat_recall += c.beat.recall / n;
            mean.downbeat_f1 += c.downbeat.f1 / n;
            mean.downbeat_precision += c.downbeat.precision / n;
            mean.downbeat_recall += c.downbeat.recall / n;
        }
        Self {
            version: REPORT_VERSION,
            model: model.into(),
            aggregation: "per-clip mean".into(),
            config,
            provenance,
            mean,
            clips,
            skipped,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// `model,beat_f1,downbeat_f1` with one data row.
    pub fn to_csv(&self) -> String {
        format!(
            "model,beat_f1,downbeat_f1\n{},{:.3},{:.3}\n",
            self.model, self.mean.beat_f1, self.mean.downbeat_f1
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beats::BeatEvent;

    fn cfg() -> EvalConfig {
        EvalConfig::default()
    }

    #[test]
    fn identity_is_perfect() {
        let x = [0.3, 0.9, 1.4, 2.0];
        assert_eq!(f_measure(&x, &x, &cfg()).unwrap().f1, 1.0);
        assert_eq!(f_measure(&[], &[], &cfg()).unwrap().f1, 1.0);
    }

    #[test]
    fn missing_last_reference() {
        let s = f_measure(&[0.5, 1.5, 2.5], &[0.5, 1.5, 2.5, 3.5], &cfg()).unwrap();
        assert_eq!(s.precision, 1.0);
        assert_eq!(s.recall, 0.75);
        assert!((s.f1 - 6.0 / 7.0).abs() < 1e-12);
        assert_eq!(s.counts, MatchCounts { hits: 3, misses: 1, false_alarms: 0 });
    }

    #[test]
    fn shift_just_outside_window_scores_zero() {
        let refs = [0.5, 1.0, 1.5];
        let est: Vec<f64> = refs.iter().map(|r| r + 0.071).collect();
        assert_eq!(f_measure(&est, &refs, &cfg()).unwrap().f1, 0.0);
        let inside: Vec<f64> = refs.iter().map(|r| r + 0.069).collect();
        assert_eq!(f_measure(&inside, &refs, &cfg()).unwrap().f1, 1.0);
    }

    #[test]
    fn empty_against_nonempty_is_zero() {
        assert_eq!(f_measure(&[], &[1.0], &cfg()).unwrap().f1, 0.0);
        assert_eq!(f_measure(&[1.0], &[], &cfg()).unwrap().f1, 0.0);
    }

    #[test]
    fn unsorted_input_is_rejected() {
        assert_eq!(f_measure(&[1.0, 0.5], &[1.0], &cfg()).unwrap_err().kind(), "InputError");
    }

    #[test]
    fn skip_intro_drops_early_events() {
        let c = EvalConfig {
            skip_intro: 1.0,
            ..cfg()
        };
        let s = f_measure(&[0.2, 1.5], &[0.6, 1.5], &c).unwrap();
        assert_eq!(s.f1, 1.0);
    }

    fn annotation(meter: u32, n: usize) -> BeatAnnotation {
        BeatAnnotation::new(
            (0..n)
                .map(|k| BeatEvent::new(0.5 + 0.5 * k as f64, (k as u32 % meter) + 1))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn rotated_bar_positions_only_hurt_downbeats() {
        let ann = annotation(4, 16);
        let same = BeatSequence {
            events: ann.events().to_vec(),
            meter: 4,
        };
        let s = evaluate_clip(&same, &ann, &cfg()).unwrap();
        assert_eq!((s.beat.f1, s.downbeat.f1), (1.0, 1.0));

        let rotated = BeatSequence {
            events: ann
                .events()
                .iter()
                .map(|e| BeatEvent::new(e.time, e.bar_position % 4 + 1))
                .collect(),
            meter: 4,
        };
        let s = evaluate_clip(&rotated, &ann, &cfg()).unwrap();
        assert_eq!(s.beat.f1, 1.0);
        assert!(s.downbeat.f1 < 1.0);

        let empty = BeatSequence { events: vec![], meter: 0 };
        let s = evaluate_clip(&empty, &ann, &cfg()).unwrap();
        assert_eq!((s.beat.f1, s.downbeat.f1), (0.0, 0.0));
    }

    fn clip(id: &str, f1: f64) -> ClipReport {
        let s = FScore {
            f1,
            precision: f1,
            recall: f1,
            counts: MatchCounts::default(),
        };
        ClipReport {
            song_id: id.into(),
            meter: Some(4),
            beat: s,
            downbeat: s,
        }
    }

    #[test]
    fn corpus_mean_is_unweighted() {
        let one = EvalReport::new("m", cfg(), None, vec![clip("a", 0.8)], vec![]);
        assert_eq!(one.mean.beat_f1, 0.8);
        let two = EvalReport::new("m", cfg(), None, vec![clip("b", 0.0), clip("a", 1.0)], vec![]);
        assert_eq!(two.mean.beat_f1, 0.5);
        assert_eq!(two.clips[0].song_id, "a");
        assert!(two.to_csv().starts_with("model,beat_f1,downbeat_f1\nm,0.500,0.500"));
    }
}
