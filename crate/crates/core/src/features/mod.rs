//! Frame-level input features: log-magnitude filterbank spectrograms and
//! their half-wave rectified first-order differences.

mod filterbank;
mod stft;

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use filterbank::{log_filterbank, Filterbank};
pub use stft::{stft_magnitude, Stft, WindowFunction};

use crate::audio::{AudioClip, PROCESSING_SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::io::atomic_write;

/// Dense row-major `f32` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let cols = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("rows differ in length".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f32] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.cols + c]
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Concatenates matrices with equal row counts along the column axis.
    pub fn hstack(parts: &[Matrix]) -> Result<Matrix> {
        let rows = parts.first().map(|m| m.rows).unwrap_or(0);
        if parts.iter().any(|m| m.rows != rows) {
            return Err(Error::Shape("hstack of matrices with different row counts".into()));
        }
        let cols = parts.iter().map(|m| m.cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for m in parts {
                data.extend_from_slice(m.row(r));
            }
        }
        Ok(Matrix { rows, cols, data })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub sample_rate: u32,
    pub frame_rate: u32,
    pub window_sizes: Vec<usize>,
    pub bands_per_octave: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub log_offset: f32,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            sample_rate: PROCESSING_SAMPLE_RATE,
            frame_rate: 100,
            window_sizes: vec![1024, 2048, 4096],
            bands_per_octave: 12,
            fmin: 30.0,
            fmax: 17_000.0,
            log_offset: 1.0,
        }
    }
}

impl FeatureConfig {
    pub fn hop(&self) -> usize {
        (self.sample_rate / self.frame_rate) as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_rate == 0 || self.sample_rate % self.frame_rate != 0 {
            return Err(Error::Config(format!(
                "frame rate {} must divide sample rate {}",
                self.frame_rate, self.sample_rate
            )));
        }
        if self.window_sizes.is_empty() {
            return Err(Error::Config("at least one window size is required".into()));
        }
        if !(self.log_offset > 0.0) {
            return Err(Error::Config("log_offset must be positive".into()));
        }
        Ok(())
    }

    /// Bands produced per window size, after merging duplicate centre bins.
    pub fn n_bands(&self) -> Result<Vec<usize>> {
        self.window_sizes
            .iter()
            .map(|&w| {
                Filterbank::logarithmic(w, self.sample_rate, self.bands_per_octave, self.fmin, self.fmax)
                    .map(|b| b.n_bands())
            })
            .collect()
    }

    /// Feature dimension: two blocks (log bands and their difference) per window.
    pub fn dims(&self) -> Result<usize> {
        Ok(self.n_bands()?.iter().map(|b| 2 * b).sum())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub values: Matrix,
    pub frame_rate: f32,
}

impl FeatureMatrix {
    pub fn new(values: Matrix, frame_rate: f32) -> Result<Self> {
        if values.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("feature matrix contains non-finite values".into()));
        }
        Ok(Self { values, frame_rate })
    }

    pub fn frames(&self) -> usize {
        self.values.rows()
    }

    pub fn dims(&self) -> usize {
        self.values.cols()
    }

    /// Binary layout, little-endian: `b"BFFM"`, u32 version (1), u32 frames,
    /// u32 dims, f32 frame rate, then `frames * dims` f32 values row by row.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + 4 * self.values.data.len());
        out.extend_from_slice(FEATURE_MAGIC);
        out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.frames() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dims() as u32).to_le_bytes());
        out.extend_from_slice(&self.frame_rate.to_le_bytes());
        for v in &self.values.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |why: &str| Error::Input(format!("feature file: {why}"));
        let mut cur = bytes;
        let mut word = [0u8; 4];
        cur.read_exact(&mut word).map_err(|_| bad("truncated header"))?;
        if &word != FEATURE_MAGIC {
            return Err(bad("bad magic"));
        }
        let mut next = || -> Result<[u8; 4]> {
            let mut w = [0u8; 4];
            cur.read_exact(&mut w).map_err(|_| bad("truncated header"))?;
            Ok(w)
        };
        let version = u32::from_le_bytes(next()?);
        if version != FEATURE_VERSION {
            return Err(bad("unsupported version"));
        }
        let frames = u32::from_le_bytes(next()?) as usize;
        let dims = u32::from_le_bytes(next()?) as usize;
        let frame_rate = f32::from_le_bytes(next()?);
        let body = &bytes[20..];
        if body.len() != frames * dims * 4 {
            return Err(bad("payload size does not match header"));
        }
        let data = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Self::new(Matrix::from_vec(frames, dims, data)?, frame_rate)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        atomic_write(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

const FEATURE_MAGIC: &[u8; 4] = b"BFFM";
const FEATURE_VERSION: u32 = 1;

/// `out[t] = max(0, in[t] - in[t-1])`, with `out[0] = 0`.
pub fn first_order_diff(features: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(features.rows(), features.cols());
    for t in 1..features.rows() {
        let (prev, cur) = (features.row(t - 1), features.row(t));
        for ((d, c), p) in out.row_mut(t).iter_mut().zip(cur).zip(prev) {
            *d = (c - p).max(0.0);
        }
    }
    out
}

/// Holds the STFT plans and filterbanks for one [`FeatureConfig`].
pub struct FeatureExtractor {
    config: FeatureConfig,
    stages: Vec<(Stft, Filterbank)>,
}

impl FeatureExtractor {
    pub fn new(config: FeatureConfig) -> Result<Self> {
        config.validate()?;
        let stages = config
            .window_sizes
            .iter()
            .map(|&w| {
                Ok((
                    Stft::new(w, config.hop(), WindowFunction::Hann)?,
                    Filterbank::logarithmic(w, config.sample_rate, config.bands_per_octave, config.fmin, config.fmax)?,
                ))
            })
            .collect::<Result<_>>()?;
        Ok(Self { config, stages })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.config
    }

    pub fn dims(&self) -> usize {
        self.stages.iter().map(|(_, b)| 2 * b.n_bands()).sum()
    }

    /// Computes the feature matrix. Clips at another rate are resampled first.
    pub fn extract(&self, clip: &AudioClip) -> Result<FeatureMatrix> {
        if clip.is_empty() {
            return Err(Error::EmptyInput(format!("clip `{}` has no samples", clip.source_id())));
        }
        let resampled;
        let clip = if clip.sample_rate() != self.config.sample_rate {
            resampled = clip.clone().resampled(self.config.sample_rate);
            &resampled
        } else {
            clip
        };
        let mut parts = Vec::with_capacity(2 * self.stages.len());
        for (stft, bank) in &self.stages {
            let spec = stft.magnitude(clip)?;
            let logspec = log_filterbank(&spec, bank, self.config.log_offset)?;
            let diff = first_order_diff(&logspec);
            parts.push(logspec);
            parts.push(diff);
        }
        FeatureMatrix::new(Matrix::hstack(&parts)?, self.config.frame_rate as f32)
    }
}

pub fn extract_features(clip: &AudioClip, config: &FeatureConfig) -> Result<FeatureMatrix> {
    FeatureExtractor::new(config.clone())?.extract(clip)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, secs: f64, amp: f64) -> AudioClip {
        let n = (secs * 44_100.0) as usize;
        let samples = (0..n)
            .map(|i| (amp * (2.0 * std::f64::consts::PI * freq * i as f64 / 44_100.0).sin()) as f32)
            .collect();
        AudioClip::new(samples, 44_100, "sine").unwrap()
    }

    #[test]
    fn diff_hand_example() {
        let m = Matrix::from_vec(3, 1, vec![1.0, 3.0, 2.0]).unwrap();
        assert_eq!(first_order_diff(&m).as_slice(), &[0.0, 2.0, 0.0]);
    }

    #[test]
    fn diff_of_constant_or_decreasing_is_zero() {
        let c = Matrix::from_vec(4, 2, vec![5.0; 8]).unwrap();
        assert!(first_order_diff(&c).as_slice().iter().all(|&v| v == 0.0));
        let d = Matrix::from_vec(4, 1, vec![4.0, 3.0, 2.0, 1.0]).unwrap();
        assert!(first_order_diff(&d).as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_clip_features() {
        let config = FeatureConfig::default();
        let clip = AudioClip::silence(44_100, 44_100);
        let f = extract_features(&clip, &config).unwrap();
        let bands = config.n_bands().unwrap();
        assert_eq!(f.dims(), config.dims().unwrap());
        assert_eq!(f.dims(), bands.iter().map(|b| 2 * b).sum::<usize>());
        let mut col = 0;
        for b in bands {
            for t in 0..f.frames() {
                let row = f.values.row(t);
                assert!(row[col..col + b].iter().all(|&v| v == 0.0)); // log10(1)
                assert!(row[col + b..col + 2 * b].iter().all(|&v| v == 0.0));
            }
            col += 2 * b;
        }
    }

    #[test]
    fn ten_second_clip_has_thousand_frames() {
        let f = extract_features(&sine(440.0, 10.0, 0.5), &FeatureConfig::default()).unwrap();
        assert_eq!(f.frames(), 1000);
        assert_eq!(f.frame_rate, 100.0);
    }

    #[test]
    fn shift_by_whole_hops_shifts_frames() {
        let config = FeatureConfig::default();
        let hop = config.hop();
        let base: Vec<f32> = (0..44_100 * 2)
            .map(|i| {
                let t = i as f64 / 44_100.0;
                ((2.0 * std::f64::consts::PI * 330.0 * t).sin() * (1.0 + (7.0 * t).sin()) * 0.3) as f32
            })
            .collect();
        let k = 7;
        let mut shifted = vec![0.0f32; k * hop];
        shifted.extend_from_slice(&base);
        let a = extract_features(&AudioClip::new(base, 44_100, "a").unwrap(), &config).unwrap();
        let b = extract_features(&AudioClip::new(shifted, 44_100, "b").unwrap(), &config).unwrap();
        // Frames far enough from both edges see identical windows.
        for t in 30..a.frames() - 30 {
            for (x, y) in a.values.row(t).iter().zip(b.values.row(t + k)) {
                assert!((x - y).abs() <= 1e-6 * x.abs().max(1.0), "frame {t}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn binary_round_trip_and_rejects_truncation() {
        let f = extract_features(&sine(220.0, 0.2, 0.3), &FeatureConfig::default()).unwrap();
        let bytes = f.to_bytes();
        assert_eq!(FeatureMatrix::from_bytes(&bytes).unwrap(), f);
        assert!(FeatureMatrix::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    }
}
