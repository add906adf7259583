use super::Matrix;
use crate::error::{Error, Result};

/// One filter: a contiguous run of non-zero weights starting at `start`.
#[derive(Debug, Clone, PartialEq)]
struct Band {
    start: usize,
    weights: Vec<f32>,
}

/// Linear map from spectrogram bins to bands.
#[derive(Debug, Clone, PartialEq)]
pub struct Filterbank {
    n_bins: usize,
    bands: Vec<Band>,
}

impl Filterbank {
    /// Builds a filterbank from dense rows (one row per band, `n_bins` columns).
    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let n_bins = rows.first().map(Vec::len).unwrap_or(0);
        if rows.is_empty() || n_bins == 0 {
            return Err(Error::Config("filterbank needs at least one band and one bin".into()));
        }
        if rows.iter().any(|r| r.len() != n_bins) {
            return Err(Error::Shape("filterbank rows differ in length".into()));
        }
        let bands = rows
            .iter()
            .map(|r| Band {
                start: 0,
                weights: r.clone(),
            })
            .collect();
        Ok(Self { n_bins, bands })
    }

    /// Triangular filters centred on the bins nearest to
    /// `440 * 2^(k / bands_per_octave)` for every such frequency in `[fmin, fmax]`.
    ///
    /// Duplicate centre bins are merged, so the band count depends on the
    /// window length. Each filter is normalized to unit area.
    pub fn logarithmic(
        window_len: usize,
        sample_rate: u32,
        bands_per_octave: usize,
        fmin: f64,
        fmax: f64,
    ) -> Result<Self> {
        if bands_per_octave == 0 || !(fmin > 0.0 && fmax > fmin) {
            return Err(Error::Config(format!(
                "invalid filterbank range {fmin}..{fmax} Hz at {bands_per_octave} bands/octave"
            )));
        }
        let n_bins = window_len / 2;
        let bin_hz = sample_rate as f64 / window_len as f64;
        let bpo = bands_per_octave as f64;
        let lo = ((fmin / 440.0).log2() * bpo).floor() as i64;
        let hi = ((fmax / 440.0).log2() * bpo).ceil() as i64;
        let mut centres: Vec<usize> = Vec::new();
        for k in lo..hi {
            let f = 440.0 * 2f64.powf(k as f64 / bpo);
            if f < fmin || f > fmax {
                continue;
            }
            let bin = ((f / bin_hz).round() as usize).min(n_bins.saturating_sub(1));
            if centres.last() != Some(&bin) {
                centres.push(bin);
            }
        }
        if centres.len() < 3 {
            return Err(Error::Config(format!(
                "window of {window_len} samples resolves fewer than one band in {fmin}..{fmax} Hz"
            )));
        }
        let bands = centres
            .windows(3)
            .map(|w| {
                let (start, mut centre, mut stop) = (w[0], w[1], w[2]);
                if stop - start < 2 {
                    centre = start;
                    stop = start + 1;
                }
                let mut weights = Vec::with_capacity(stop - start);
                for i in start..centre {
                    weights.push((i - start) as f32 / (centre - start) as f32);
                }
                for i in centre..stop {
                    weights.push(1.0 - (i - centre) as f32 / (stop - centre) as f32);
                }
                let area: f32 = weights.iter().sum();
                for w in &mut weights {
                    *w /= area;
                }
                Band { start, weights }
            })
            .collect();
        Ok(Self { n_bins, bands })
    }

    pub fn n_bands(&self) -> usize {
        self.bands.len()
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn apply(&self, spectrum: &[f32], out: &mut [f32]) {
        debug_assert_eq!(spectrum.len(), self.n_bins);
        for (dst, band) in out.iter_mut().zip(&self.bands) {
            *dst = band
                .weights
                .iter()
                .zip(&spectrum[band.start..])
                .map(|(w, s)| w * s)
                .sum();
        }
    }
}

/// `log10(filterbank · row + log_offset)` for every spectrogram row.
pub fn log_filterbank(spec: &Matrix, bank: &Filterbank, log_offset: f32) -> Result<Matrix> {
    if spec.cols() != bank.n_bins() {
        return Err(Error::Shape(format!(
            "spectrogram has {} bins, filterbank expects {}",
            spec.cols(),
            bank.n_bins()
        )));
    }
    let mut out = Matrix::zeros(spec.rows(), bank.n_bands());
    for t in 0..spec.rows() {
        let dst = out.row_mut(t);
        bank.apply(spec.row(t), dst);
        for v in dst.iter_mut() {
            *v = (*v + log_offset).log10();
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_spectrogram_maps_to_log_offset() {
        let bank = Filterbank::logarithmic(2048, 44_100, 12, 30.0, 17_000.0).unwrap();
        let spec = Matrix::zeros(4, 1024);
        let out = log_filterbank(&spec, &bank, 2.0).unwrap();
        assert!(out.as_slice().iter().all(|&v| v == 2f32.log10()));
    }

    #[test]
    fn single_all_ones_filter_sums_every_bin() {
        let bins = 37;
        let bank = Filterbank::from_rows(&[vec![1.0; bins]]).unwrap();
        let spec = Matrix::from_vec(1, bins, vec![1.0; bins]).unwrap();
        let out = log_filterbank(&spec, &bank, 1.0).unwrap();
        let oracle = (1.0f64 + (0..bins).map(|_| 1.0f64).sum::<f64>()).log10();
        assert!((out.get(0, 0) as f64 - oracle).abs() < 1e-6);
    }

    #[test]
    fn doubling_magnitudes_increases_every_band() {
        let bank = Filterbank::logarithmic(1024, 44_100, 12, 30.0, 17_000.0).unwrap();
        let row: Vec<f32> = (0..512).map(|i| 0.1 + (i % 7) as f32 * 0.3).collect();
        let spec = Matrix::from_vec(1, 512, row.clone()).unwrap();
        let doubled = Matrix::from_vec(1, 512, row.iter().map(|v| v * 2.0).collect()).unwrap();
        let a = log_filterbank(&spec, &bank, 1.0).unwrap();
        let b = log_filterbank(&doubled, &bank, 1.0).unwrap();
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!(y > x);
        }
    }

    #[test]
    fn filters_have_unit_area_and_band_count_grows_with_window() {
        let small = Filterbank::logarithmic(1024, 44_100, 12, 30.0, 17_000.0).unwrap();
        let mid = Filterbank::logarithmic(2048, 44_100, 12, 30.0, 17_000.0).unwrap();
        let large = Filterbank::logarithmic(4096, 44_100, 12, 30.0, 17_000.0).unwrap();
        assert!(small.n_bands() < mid.n_bands() && mid.n_bands() < large.n_bands());
        // Matches the widely used 81-band layout for 2048-sample frames at 44.1 kHz.
        assert_eq!(mid.n_bands(), 81);
        for band in &mid.bands {
            let area: f32 = band.weights.iter().sum();
            assert!((area - 1.0).abs() < 1e-5);
        }
    }
}
