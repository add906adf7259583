use super::ActivationSequence;
use crate::error::{Error, Result};

pub const BEAT: u8 = 0;
pub const DOWNBEAT: u8 = 1;
pub const NON_BEAT: u8 = 2;

/// Per-frame class labels with per-frame loss weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Targets {
    pub labels: Vec<u8>,
    pub weights: Vec<f32>,
}

impl Targets {
    pub fn new(labels: Vec<u8>, weights: Vec<f32>) -> Result<Self> {
        if labels.len() != weights.len() {
            return Err(Error::Shape("labels and weights differ in length".into()));
        }
        let t = Self { labels, weights };
        t.check(t.labels.len())?;
        Ok(t)
    }

    /// Unit weight on every frame.
    pub fn hard(labels: Vec<u8>) -> Self {
        let weights = vec![1.0; labels.len()];
        Self { labels, weights }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub(crate) fn check(&self, frames: usize) -> Result<()> {
        if self.labels.len() != frames {
            return Err(Error::Shape(format!(
                "{} targets for {frames} frames",
                self.labels.len()
            )));
        }
        if let Some((frame, &label)) = self.labels.iter().enumerate().find(|(_, &l)| l > NON_BEAT) {
            return Err(Error::Label { frame, label });
        }
        Ok(())
    }

    /// Frame targets from `(time, bar_position)` events.
    ///
    /// The frame nearest each event gets the beat class (downbeat when the bar
    /// position is 1) with weight 1. Frames within `widen` of an event that are
    /// not themselves event frames get the same class with weight 0.5.
    pub fn from_events(events: &[(f64, u32)], frames: usize, frame_rate: f64, widen: usize) -> Self {
        let mut labels = vec![NON_BEAT; frames];
        let mut weights = vec![1.0f32; frames];
        let mut centre = vec![false; frames];
        let class = |pos: u32| if pos == 1 { DOWNBEAT } else { BEAT };
        for &(time, pos) in events {
            let f = (time * frame_rate).round();
            if f >= 0.0 && (f as usize) < frames {
                labels[f as usize] = class(pos);
                centre[f as usize] = true;
            }
        }
        for &(time, pos) in events {
            let f = (time * frame_rate).round() as i64;
            for d in 1..=widen as i64 {
                for n in [f - d, f + d] {
                    if n >= 0 && (n as usize) < frames && !centre[n as usize] && labels[n as usize] == NON_BEAT {
                        labels[n as usize] = class(pos);
                        weights[n as usize] = 0.5;
                    }
                }
            }
        }
        Self { labels, weights }
    }

    /// Multiplies each frame weight by the weight of its class.
    pub fn reweighted(mut self, class_weights: [f32; 3]) -> Self {
        for (w, &l) in self.weights.iter_mut().zip(&self.labels) {
            *w *= class_weights[l as usize];
        }
        self
    }
}

/// Smallest probability fed to the logarithm.
const PROB_FLOOR: f64 = 1e-7;

/// Mean framewise weighted cross-entropy of an activation sequence.
pub fn loss(activations: &ActivationSequence, targets: &Targets) -> Result<f64> {
    targets.check(activations.frames())?;
    if activations.frames() == 0 {
        return Ok(0.0);
    }
    let total: f64 = activations
        .rows
        .iter()
        .zip(targets.labels.iter().zip(&targets.weights))
        .map(|(row, (&l, &w))| -(w as f64) * (row[l as usize] as f64).max(PROB_FLOOR).ln())
        .sum();
    Ok(total / activations.frames() as f64)
}
