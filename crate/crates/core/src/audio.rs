//! Mono PCM audio clips and WAV input/output.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::atomic_write_with;

/// Sample rate every clip is converted to before feature extraction.
pub const PROCESSING_SAMPLE_RATE: u32 = 44_100;

/// Mono PCM signal.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f32>,
    sample_rate: u32,
    source_id: String,
}

impl AudioClip {
    /// Wraps samples as a clip. Rejects non-finite samples and a zero rate.
    pub fn new(samples: Vec<f32>, sample_rate: u32, source_id: impl Into<String>) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Input("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::Input(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
            source_id: source_id.into(),
        })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Self {
        Self {
            samples: vec![0.0; len],
            sample_rate,
            source_id: "silence".into(),
        }
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Duration in seconds.
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Divides by `max(1, max|sample|)` so every sample lies in [-1, 1].
    pub fn normalized(mut self) -> Self {
        let peak = self.samples.iter().fold(0.0f32, |m, s| m.max(s.abs()));
        if peak > 1.0 {
            for s in &mut self.samples {
                *s /= peak;
            }
        }
        self
    }

    /// Linear-interpolation resampling. Returns `self` unchanged when the rate already matches.
    pub fn resampled(self, target_rate: u32) -> Self {
        if target_rate == self.sample_rate || self.samples.is_empty() {
            return Self {
                sample_rate: target_rate,
                ..self
            };
        }
        let ratio = self.sample_rate as f64 / target_rate as f64;
        let out_len = ((self.samples.len() as f64) / ratio).round().max(1.0) as usize;
        let last = self.samples.len() - 1;
        let samples = (0..out_len)
            .map(|i| {
                let pos = i as f64 * ratio;
                let left = (pos.floor() as usize).min(last);
                let right = (left + 1).min(last);
                let frac = (pos - left as f64) as f32;
                self.samples[left] * (1.0 - frac) + self.samples[right] * frac
            })
            .collect();
        Self {
            samples,
            sample_rate: target_rate,
            source_id: self.source_id,
        }
    }

    /// Reads a PCM WAV file (8/16/24/32-bit integer or 32-bit float), averages
    /// channels to mono and peak-normalizes into [-1, 1].
    pub fn read_wav(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let decode_err = |reason: String| Error::Decode {
            path: path.to_path_buf(),
            reason,
        };
        let mut reader = hound::WavReader::open(path).map_err(|e| decode_err(e.to_string()))?;
        let spec = reader.spec();
        let channels = spec.channels.max(1) as usize;
        let interleaved: Vec<f32> = match spec.sample_format {
            hound::SampleFormat::Float => {
                if spec.bits_per_sample != 32 {
                    return Err(decode_err(format!("unsupported float width {}", spec.bits_per_sample)));
                }
                reader
                    .samples::<f32>()
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| decode_err(e.to_string()))?
            }
            hound::SampleFormat::Int => {
                let scale = match spec.bits_per_sample {
                    8 | 16 | 24 | 32 => (1u64 << (spec.bits_per_sample - 1)) as f32,
                    other => return Err(decode_err(format!("unsupported integer width {other}"))),
                };
                reader
                    .samples::<i32>()
                    .map(|s| s.map(|v| v as f32 / scale))
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| decode_err(e.to_string()))?
            }
        };
        let samples = interleaved
            .chunks(channels)
            .map(|frame| frame.iter().sum::<f32>() / channels as f32)
            .collect();
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Ok(Self::new(samples, spec.sample_rate, id)?.normalized())
    }

    /// Reads a WAV file and converts it to the processing sample rate.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::read_wav(path)?.resampled(PROCESSING_SAMPLE_RATE))
    }

    /// Writes a mono 32-bit float WAV file atomically.
    pub fn write_wav(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: self.sample_rate,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        atomic_write_with(path, |file| {
            let mut writer = hound::WavWriter::new(std::io::BufWriter::new(file), spec)
                .map_err(|e| std::io::Error::other(e.to_string()))?;
            for &s in &self.samples {
                writer
                    .write_sample(s)
                    .map_err(|e| std::io::Error::other(e.to_string()))?;
            }
            writer
                .finalize()
                .map_err(|e| std::io::Error::other(e.to_string()))
        })
    }
}
