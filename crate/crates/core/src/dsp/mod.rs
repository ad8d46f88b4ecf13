//! Deterministic signal-processing primitives shared by every pipeline.
//!
//! The routines follow the conventions of the scientific Python stack (density
//! scaled one-sided Welch PSD, `'same'` convolutions, zero-padded median filter,
//! polynomial edge fits for Savitzky-Golay) so that reference pipelines written
//! against those conventions port without behavioural drift.

mod cwt;
pub mod fft;
mod filter;
pub mod numeric;
mod peaks;
mod spectrogram;
mod welch;
mod window;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cwt::{ricker, ricker_cwt};
pub use filter::{median_filter, savgol_coeffs, savgol_filter};
pub use peaks::{find_peaks, peak_prominences, PeakParams};
pub use spectrogram::{complex_spectrogram, spectrogram_with_window, ComplexSpectrogram};
pub use welch::{welch, welch_psd, whiten_fft, PsdEstimate};
pub use window::{hann, tukey_window, WindowKind};

/// Smallest positive normal `f64`; the floor applied to spectra before division.
pub const TINY: f64 = f64::MIN_POSITIVE;

/// Uniformly sampled real series. Sample `k` sits at `t0 + k * dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledSeries {
    pub samples: Vec<f64>,
    pub t0: f64,
    pub dt: f64,
}

impl SampledSeries {
    pub fn new(samples: Vec<f64>, t0: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::param(format!("sample spacing must be positive, got {dt}")));
        }
        if samples.len() < 2 {
            return Err(Error::param("a series needs at least two samples"));
        }
        Ok(SampledSeries { samples, t0, dt })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn fs(&self) -> f64 {
        1.0 / self.dt
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 * self.dt
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn with_samples(&self, samples: Vec<f64>) -> Self {
        SampledSeries { samples, t0: self.t0, dt: self.dt }
    }
}
