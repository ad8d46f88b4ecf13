use num_complex::Complex64;

use super::fft::fft_in_place;
use super::{SampledSeries, WindowKind};
use crate::error::{Error, Result};

/// Short-time Fourier transform on a regular frame grid.
///
/// `values` is stored frame by frame: entry `(f, t)` lives at
/// `t * freqs.len() + f`. `times` are window centres relative to the first
/// sample, in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    pub freqs: Vec<f64>,
    pub times: Vec<f64>,
    pub values: Vec<Complex64>,
}

impl ComplexSpectrogram {
    pub fn n_freqs(&self) -> usize {
        self.freqs.len()
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn get(&self, f: usize, t: usize) -> Complex64 {
        self.values[t * self.freqs.len() + f]
    }

    pub fn frame(&self, t: usize) -> &[Complex64] {
        let nf = self.freqs.len();
        &self.values[t * nf..(t + 1) * nf]
    }

    /// Magnitude-mode spectrogram in the same layout.
    pub fn magnitude(&self) -> Vec<f64> {
        self.values.iter().map(|c| c.norm()).collect()
    }
}

/// Complex spectrogram with the default analysis window (periodic Tukey,
/// alpha 0.25), no detrending and density scaling.
pub fn complex_spectrogram(
    x: &SampledSeries,
    nperseg: usize,
    noverlap: usize,
) -> Result<ComplexSpectrogram> {
    spectrogram_with_window(x, &WindowKind::Tukey { alpha: 0.25 }.samples(nperseg), noverlap)
}

pub fn spectrogram_with_window(
    x: &SampledSeries,
    window: &[f64],
    noverlap: usize,
) -> Result<ComplexSpectrogram> {
    let nperseg = window.len();
    let n = x.len();
    if nperseg == 0 || nperseg > n {
        return Err(Error::param(format!(
            "spectrogram: segment length {nperseg} invalid for series length {n}"
        )));
    }
    if noverlap >= nperseg {
        return Err(Error::param(format!(
            "spectrogram: overlap {noverlap} must be below segment length {nperseg}"
        )));
    }
    let fs = x.fs();
    let step = nperseg - noverlap;
    let frames = (n - noverlap) / step;
    let nfreq = nperseg / 2 + 1;
    let scale = (1.0 / (fs * window.iter().map(|w| w * w).sum::<f64>())).sqrt();

    let mut values = Vec::with_capacity(frames * nfreq);
    let mut buf = vec![Complex64::default(); nperseg];
    for t in 0..frames {
        let seg = &x.samples[t * step..t * step + nperseg];
        for ((b, &v), &w) in buf.iter_mut().zip(seg).zip(window) {
            *b = Complex64::new(v * w, 0.0);
        }
        fft_in_place(&mut buf);
        values.extend(buf[..nfreq].iter().map(|c| c * scale));
    }
    let freqs = (0..nfreq).map(|k| k as f64 * fs / nperseg as f64).collect();
    let times = (0..frames)
        .map(|t| (nperseg as f64 / 2.0 + (t * step) as f64) / fs)
        .collect();
    Ok(ComplexSpectrogram { freqs, times, values })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(x: Vec<f64>, fs: f64) -> SampledSeries {
        SampledSeries::new(x, 0.0, 1.0 / fs).unwrap()
    }

    #[test]
    fn frame_count() {
        let s = complex_spectrogram(&series(vec![0.0; 1024], 1.0), 256, 128).unwrap();
        assert_eq!(s.n_times(), 7);
        assert_eq!(s.n_freqs(), 129);
        assert_eq!(s.times[0], 128.0);
        assert_eq!(s.times[6], 128.0 + 6.0 * 128.0);
    }

    #[test]
    fn matches_reference_values() {
        // scipy.signal.spectrogram(x, fs=2, nperseg=8, noverlap=4, mode='complex', detrend=False)
        let x = vec![0.3, -1.2, 2.0, 0.7, -0.4, 1.1, -2.2, 0.9, 0.0, 1.5, -0.8, 0.6];
        let s = complex_spectrogram(&series(x, 2.0), 8, 4).unwrap();
        assert_eq!(s.times, vec![2.0, 4.0]);
        let expected = [
            (0, 0, 0.240_535_117_721_181_97, 0.0),
            (1, 0, -0.289_958_199_894_718_8, -0.650_041_624_770_648_4),
            (2, 1, 0.801_783_725_737_273_2, -0.293_987_366_103_666_9),
            (4, 1, -1.897_554_817_578_213, 0.0),
        ];
        for (f, t, re, im) in expected {
            let v = s.get(f, t);
            assert!((v.re - re).abs() < 1e-12 && (v.im - im).abs() < 1e-12, "{f},{t}: {v}");
        }
    }

    #[test]
    fn impulse_support() {
        let mut x = vec![0.0; 64];
        x[20] = 1.0;
        let s = complex_spectrogram(&series(x, 1.0), 16, 8).unwrap();
        for t in 0..s.n_times() {
            let start = t * 8;
            let energy: f64 = s.frame(t).iter().map(|c| c.norm_sqr()).sum();
            // the window is zero at the first sample of each segment
            let covered = start < 20 && 20 < start + 16;
            assert_eq!(energy > 0.0, covered, "frame {t}");
        }
    }
}
