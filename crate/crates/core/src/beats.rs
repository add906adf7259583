//! Beat events and the tab-separated annotation format
//! (`time<TAB>bar_position`, one event per line, seconds with 3 decimals).

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::atomic_write;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeatEvent {
    /// Seconds from the start of the clip.
    pub time: f64,
    /// 1 marks a downbeat.
    pub bar_position: u32,
}

impl BeatEvent {
    pub fn new(time: f64, bar_position: u32) -> Self {
        Self { time, bar_position }
    }

    pub fn is_downbeat(&self) -> bool {
        self.bar_position == 1
    }
}

/// Ground-truth beats of one song.
///
/// Times strictly increase, positions start at 1 or more and every position
/// either follows its predecessor by one or restarts the bar at 1. At least two
/// events are required so a tempo is defined.
#[derive(Debug, Clone, PartialEq)]
pub struct BeatAnnotation {
    events: Vec<BeatEvent>,
}

impl BeatAnnotation {
    pub fn new(events: Vec<BeatEvent>) -> Result<Self> {
        validate_events(&events, 2).map_err(|reason| Error::Annotation {
            path: Default::default(),
            reason,
        })?;
        Ok(Self { events })
    }

    pub fn events(&self) -> &[BeatEvent] {
        &self.events
    }

    pub fn times(&self) -> Vec<f64> {
        self.events.iter().map(|e| e.time).collect()
    }

    pub fn downbeat_times(&self) -> Vec<f64> {
        downbeats(&self.events)
    }

    pub fn to_text(&self) -> String {
        events_to_text(&self.events)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |reason: String| Error::Annotation {
            path: path.to_path_buf(),
            reason,
        };
        let events = parse_events(text).map_err(err)?;
        validate_events(&events, 2).map_err(err)?;
        Ok(Self { events })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        atomic_write(path, self.to_text().as_bytes())
    }

    /// Event list for a stem of the same song. Labels carry over unchanged.
    pub fn propagate(&self) -> Self {
        self.clone()
    }
}

/// Decoded beats of one clip plus the meter the decoder settled on.
#[derive(Debug, Clone, PartialEq)]
pub struct BeatSequence {
    pub events: Vec<BeatEvent>,
    pub meter: u32,
}

impl BeatSequence {
    pub fn times(&self) -> Vec<f64> {
        self.events.iter().map(|e| e.time).collect()
    }

    pub fn downbeat_times(&self) -> Vec<f64> {
        downbeats(&self.events)
    }

    pub fn to_text(&self) -> String {
        events_to_text(&self.events)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        atomic_write(path, self.to_text().as_bytes())
    }

    /// Reads an estimate file. Unlike annotations, zero or one event is allowed.
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let err = |reason: String| Error::Annotation {
            path: path.to_path_buf(),
            reason,
        };
        let events = parse_events(&text).map_err(err)?;
        validate_events(&events, 0).map_err(err)?;
        let meter = events.iter().map(|e| e.bar_position).max().unwrap_or(0);
        Ok(Self { events, meter })
    }
}

fn downbeats(events: &[BeatEvent]) -> Vec<f64> {
    events.iter().filter(|e| e.is_downbeat()).map(|e| e.time).collect()
}

fn events_to_text(events: &[BeatEvent]) -> String {
    events
        .iter()
        .map(|e| format!("{:.3}\t{}\n", e.time, e.bar_position))
        .collect()
}

fn parse_events(text: &str) -> std::result::Result<Vec<BeatEvent>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            let mut fields = line.split_whitespace();
            let time = fields
                .next()
                .and_then(|f| f.parse::<f64>().ok())
                .ok_or_else(|| format!("line {}: bad time", n + 1))?;
            let pos = fields
                .next()
                .and_then(|f| f.parse::<u32>().ok())
                .ok_or_else(|| format!("line {}: bad bar position", n + 1))?;
            Ok(BeatEvent::new(time, pos))
        })
        .collect()
}

fn validate_events(events: &[BeatEvent], min_len: usize) -> std::result::Result<(), String> {
    if events.len() < min_len {
        return Err(format!("{} events, at least {min_len} required", events.len()));
    }
    for (i, e) in events.iter().enumerate() {
        if !e.time.is_finite() || e.time < 0.0 {
            return Err(format!("event {i}: invalid time {}", e.time));
        }
        if e.bar_position == 0 {
            return Err(format!("event {i}: bar positions start at 1"));
        }
        if i > 0 {
            let p = events[i - 1];
            if e.time <= p.time {
                return Err(format!("event {i}: times must strictly increase"));
            }
            if e.bar_position != 1 && e.bar_position != p.bar_position + 1 {
                return Err(format!(
                    "event {i}: bar position {} does not follow {}",
                    e.bar_position, p.bar_position
                ));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let a = BeatAnnotation::new(vec![
            BeatEvent::new(0.5, 3),
            BeatEvent::new(1.0, 1),
            BeatEvent::new(1.5, 2),
        ])
        .unwrap();
        let text = a.to_text();
        assert_eq!(text, "0.500\t3\n1.000\t1\n1.500\t2\n");
        assert_eq!(BeatAnnotation::parse(&text, Path::new("x")).unwrap(), a);
        assert_eq!(a.downbeat_times(), vec![1.0]);
    }

    #[test]
    fn rejects_invalid_annotations() {
        assert!(BeatAnnotation::new(vec![BeatEvent::new(0.5, 1)]).is_err());
        assert!(BeatAnnotation::new(vec![BeatEvent::new(0.5, 1), BeatEvent::new(0.5, 2)]).is_err());
        assert!(BeatAnnotation::new(vec![BeatEvent::new(0.5, 1), BeatEvent::new(1.0, 3)]).is_err());
        assert!(BeatAnnotation::new(vec![BeatEvent::new(0.5, 0), BeatEvent::new(1.0, 1)]).is_err());
        assert!(BeatAnnotation::parse("0.5\tx\n", Path::new("x")).is_err());
    }

    #[test]
    fn propagated_labels_are_identical() {
        let a = BeatAnnotation::new(vec![BeatEvent::new(0.25, 1), BeatEvent::new(0.75, 2)]).unwrap();
        assert_eq!(a.propagate().to_text().as_bytes(), a.to_text().as_bytes());
    }
}
