use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::Matrix;
use crate::audio::AudioClip;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowFunction {
    /// Symmetric Hann window.
    Hann,
    Rectangular,
}

impl WindowFunction {
    fn coefficients(self, len: usize) -> Vec<f32> {
        match self {
            WindowFunction::Rectangular => vec![1.0; len],
            WindowFunction::Hann if len == 1 => vec![1.0],
            WindowFunction::Hann => (0..len)
                .map(|n| {
                    let phase = 2.0 * std::f64::consts::PI * n as f64 / (len - 1) as f64;
                    (0.5 - 0.5 * phase.cos()) as f32
                })
                .collect(),
        }
    }
}

/// Reusable short-time Fourier transform plan.
///
/// Frame `t` is centered on sample `t * hop`; the signal is reflect-padded by
/// `window / 2` samples at both ends (zero beyond a single reflection), so a
/// clip of `n` samples yields `ceil(n / hop)` frames of `window / 2` bins.
pub struct Stft {
    window_len: usize,
    hop: usize,
    window: Vec<f32>,
    fft: Arc<dyn Fft<f32>>,
}

impl Stft {
    pub fn new(window_len: usize, hop: usize, function: WindowFunction) -> Result<Self> {
        if hop == 0 || window_len < hop {
            return Err(Error::Config(format!(
                "stft requires window >= hop >= 1 (window {window_len}, hop {hop})"
            )));
        }
        let fft = FftPlanner::new().plan_fft_forward(window_len);
        Ok(Self {
            window_len,
            hop,
            window: function.coefficients(window_len),
            fft,
        })
    }

    pub fn bins(&self) -> usize {
        (self.window_len / 2).max(1)
    }

    pub fn frame_count(&self, samples: usize) -> usize {
        samples.div_ceil(self.hop)
    }

    pub fn magnitude(&self, clip: &AudioClip) -> Result<Matrix> {
        if clip.is_empty() {
            return Err(Error::EmptyInput("cannot transform an empty clip".into()));
        }
        let samples = clip.samples();
        let n = samples.len() as isize;
        let frames = self.frame_count(samples.len());
        let bins = self.bins();
        let half = (self.window_len / 2) as isize;
        let mut out = Matrix::zeros(frames, bins);
        let mut buf = vec![Complex::new(0.0f32, 0.0); self.window_len];
        let mut scratch = vec![Complex::new(0.0f32, 0.0); self.fft.get_inplace_scratch_len()];
        let sample_at = |i: isize| -> f32 {
            let j = if i < 0 {
                -i
            } else if i >= n {
                2 * (n - 1) - i
            } else {
                i
            };
            if (0..n).contains(&j) {
                samples[j as usize]
            } else {
                0.0
            }
        };
        for t in 0..frames {
            let start = (t * self.hop) as isize - half;
            for (k, slot) in buf.iter_mut().enumerate() {
                *slot = Complex::new(sample_at(start + k as isize) * self.window[k], 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (dst, c) in out.row_mut(t).iter_mut().zip(&buf[..bins]) {
                *dst = c.norm();
            }
        }
        Ok(out)
    }
}

/// Magnitude spectrogram with a Hann window.
pub fn stft_magnitude(clip: &AudioClip, window: usize, hop: usize) -> Result<Matrix> {
    Stft::new(window, hop, WindowFunction::Hann)?.magnitude(clip)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct_dft_magnitude(frame: &[f64]) -> Vec<f64> {
        let n = frame.len();
        (0..n / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (i, &x) in frame.iter().enumerate() {
                    let ang = -2.0 * std::f64::consts::PI * (k * i) as f64 / n as f64;
                    re += x * ang.cos();
                    im += x * ang.sin();
                }
                (re * re + im * im).sqrt()
            })
            .collect()
    }

    #[test]
    fn zero_clip_gives_zero_matrix() {
        let clip = AudioClip::silence(1000, 8000);
        let m = stft_magnitude(&clip, 256, 100).unwrap();
        assert_eq!(m.rows(), 10);
        assert!(m.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn empty_clip_is_rejected() {
        let clip = AudioClip::silence(0, 8000);
        assert_eq!(stft_magnitude(&clip, 256, 100).unwrap_err().kind(), "EmptyInput");
    }

    #[test]
    fn clip_of_one_hop_has_one_frame() {
        let clip = AudioClip::silence(441, 44_100);
        assert_eq!(stft_magnitude(&clip, 2048, 441).unwrap().rows(), 1);
        let clip = AudioClip::silence(442, 44_100);
        assert_eq!(stft_magnitude(&clip, 2048, 441).unwrap().rows(), 2);
    }

    #[test]
    fn bin_centred_sine_matches_direct_dft() {
        let rate = 8000u32;
        let window = 256;
        let bin = 19usize;
        let freq = bin as f64 * rate as f64 / window as f64;
        let samples: Vec<f32> = (0..4000)
            .map(|i| (0.8 * (2.0 * std::f64::consts::PI * freq * i as f64 / rate as f64).sin()) as f32)
            .collect();
        let clip = AudioClip::new(samples.clone(), rate, "sine").unwrap();
        let stft = Stft::new(window, 128, WindowFunction::Rectangular).unwrap();
        let m = stft.magnitude(&clip).unwrap();

        let t = 10;
        let start = t * 128 - window / 2;
        let frame: Vec<f64> = samples[start..start + window].iter().map(|&s| s as f64).collect();
        let oracle = direct_dft_magnitude(&frame);
        let row = m.row(t);
        let peak = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(peak, (freq * window as f64 / rate as f64).round() as usize);
        for (a, b) in row.iter().zip(&oracle) {
            assert!((*a as f64 - b).abs() < 1e-3 * oracle[bin], "{a} vs {b}");
        }
    }

    #[test]
    fn window_longer_than_clip_pads() {
        let clip = AudioClip::new(vec![0.5; 10], 8000, "short").unwrap();
        let m = stft_magnitude(&clip, 64, 4).unwrap();
        assert_eq!(m.rows(), 3);
        assert!(m.as_slice().iter().all(|v| v.is_finite() && *v >= 0.0));
    }

    #[test]
    fn rejects_hop_larger_than_window() {
        assert!(Stft::new(64, 128, WindowFunction::Hann).is_err());
        assert!(Stft::new(64, 0, WindowFunction::Hann).is_err());
    }
}
