use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::fft::{fft_in_place, irfft, rfft, rfftfreq};
use super::numeric::{convolve_same, interp, mean};
use super::{SampledSeries, WindowKind, TINY};
use crate::error::{Error, Result};

/// One-sided power spectral density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdEstimate {
    pub freqs: Vec<f64>,
    pub psd: Vec<f64>,
    pub nperseg: usize,
    pub noverlap: usize,
}

/// Welch PSD of a series with a named window.
pub fn welch_psd(
    x: &SampledSeries,
    nperseg: usize,
    noverlap: usize,
    window: WindowKind,
) -> Result<PsdEstimate> {
    welch(&x.samples, x.fs(), &window.samples(nperseg), noverlap)
}

/// Welch's averaged periodogram with an explicit window.
///
/// Each segment has its mean removed before tapering. Power is density scaled
/// by `1 / (fs * sum(w^2))` and folded onto positive frequencies (every bin but
/// DC and, for even lengths, Nyquist is doubled). Values are floored at
/// [`TINY`].
pub fn welch(x: &[f64], fs: f64, window: &[f64], noverlap: usize) -> Result<PsdEstimate> {
    let nperseg = window.len();
    if nperseg == 0 {
        return Err(Error::param("welch: empty window"));
    }
    if nperseg > x.len() {
        return Err(Error::param(format!(
            "welch: segment length {nperseg} exceeds series length {}",
            x.len()
        )));
    }
    if noverlap >= nperseg {
        return Err(Error::param(format!(
            "welch: overlap {noverlap} must be below segment length {nperseg}"
        )));
    }
    let step = nperseg - noverlap;
    let nseg = (x.len() - noverlap) / step;
    let nfreq = nperseg / 2 + 1;
    let scale = 1.0 / (fs * window.iter().map(|w| w * w).sum::<f64>());

    let mut acc = vec![0.0; nfreq];
    let mut buf = vec![Complex64::default(); nperseg];
    for s in 0..nseg {
        let seg = &x[s * step..s * step + nperseg];
        let m = mean(seg);
        for ((b, &v), &w) in buf.iter_mut().zip(seg).zip(window) {
            *b = Complex64::new((v - m) * w, 0.0);
        }
        fft_in_place(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
    }
    let last_doubled = if nperseg % 2 == 0 { nfreq - 1 } else { nfreq };
    let psd = acc
        .iter()
        .enumerate()
        .map(|(k, &a)| {
            let mut p = a * scale / nseg as f64;
            if k >= 1 && k < last_doubled {
                p *= 2.0;
            }
            p.max(TINY)
        })
        .collect();
    let freqs = (0..nfreq).map(|k| k as f64 * fs / nperseg as f64).collect();
    Ok(PsdEstimate { freqs, psd, nperseg, noverlap })
}

/// Frequency-domain whitening against a PSD estimate.
///
/// The series mean is removed, the PSD is smoothed by a `smoothing_kernel`
/// point moving average, floored, interpolated onto the FFT bins, and the
/// spectrum is divided by its square root. The output has the input length.
pub fn whiten_fft(x: &SampledSeries, psd: &PsdEstimate, smoothing_kernel: usize) -> SampledSeries {
    let m = mean(&x.samples);
    let centered: Vec<f64> = x.samples.iter().map(|v| v - m).collect();
    let smoothed: Vec<f64> = if smoothing_kernel > 1 {
        let k = vec![1.0 / smoothing_kernel as f64; smoothing_kernel];
        convolve_same(&psd.psd, &k)
    } else {
        psd.psd.clone()
    };
    let smoothed: Vec<f64> = smoothed.into_iter().map(|p| p.max(TINY)).collect();
    let n = centered.len();
    let bins = rfftfreq(n, x.dt);
    let s = interp(&bins, &psd.freqs, &smoothed);
    let mut spec = rfft(&centered);
    for (c, p) in spec.iter_mut().zip(&s) {
        *c /= p.sqrt();
    }
    x.with_samples(irfft(&spec, n))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_reference_periodogram() {
        // scipy.signal.welch(x, fs=4, nperseg=8, noverlap=4, window='hann')
        let x = [0.3, -1.2, 2.0, 0.7, -0.4, 1.1, -2.2, 0.9, 0.0, 1.5, -0.8, 0.6];
        let p = welch(&x, 4.0, &WindowKind::Hann.samples(8), 4).unwrap();
        let expected = [
            0.014_761_311_049_750_196,
            0.424_402_875_964_315_36,
            0.223_649_080_245_320_54,
            0.885_135_250_825_057_8,
            0.766_283_985_494_302_4,
        ];
        assert_eq!(p.freqs, vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        for (a, b) in p.psd.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12 * b.max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn zero_series_hits_floor() {
        let p = welch(&[0.0; 64], 1.0, &WindowKind::Hann.samples(16), 8).unwrap();
        assert!(p.psd.iter().all(|&v| v == TINY));
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(welch(&[0.0; 8], 1.0, &[1.0; 16], 0).is_err());
        assert!(welch(&[0.0; 32], 1.0, &[1.0; 16], 16).is_err());
    }

    #[test]
    fn flat_psd_whitening_is_identity() {
        let x: Vec<f64> = (0..64).map(|i| ((i * 7 % 13) as f64 - 6.0) / 3.0).collect();
        let m = mean(&x);
        let s = SampledSeries::new(x.clone(), 0.0, 0.25).unwrap();
        let psd = PsdEstimate {
            freqs: vec![0.0, 2.0],
            psd: vec![1.0, 1.0],
            nperseg: 2,
            noverlap: 0,
        };
        let w = whiten_fft(&s, &psd, 1);
        assert_eq!(w.len(), 64);
        for (a, b) in w.samples.iter().zip(&x) {
            assert!((a - (b - m)).abs() < 1e-12);
        }
    }
}
