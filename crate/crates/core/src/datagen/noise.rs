use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dsp::{fft, SampledSeries};
use crate::error::{Error, Result};

/// One-sided noise PSD: flat at `level` above `f_corner`, rising as
/// `(f_corner / f)^2` below it. Frequencies under `f_floor` are evaluated at
/// `f_floor`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsdModel {
    pub level: f64,
    pub f_corner: f64,
    pub f_floor: f64,
}

impl Default for PsdModel {
    fn default() -> Self {
        PsdModel { level: 1e-46, f_corner: 40.0, f_floor: 5.0 }
    }
}

impl PsdModel {
    pub fn value(&self, f: f64) -> f64 {
        let f = f.max(self.f_floor);
        if f >= self.f_corner {
            self.level
        } else {
            self.level * (self.f_corner / f).powi(2)
        }
    }
}

/// SplitMix64 finaliser; used to derive independent stream seeds.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x6A09_E667_F3BC_C908, |acc, &p| mix64(acc ^ mix64(p)))
}

/// Stationary Gaussian noise with one-sided PSD `psd`, synthesised in the
/// frequency domain.
pub fn colored_noise(n: usize, fs: f64, psd: &PsdModel, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let df = fs / n as f64;
    let nbins = n / 2 + 1;
    let mut spec = Vec::with_capacity(nbins);
    spec.push(Complex64::default());
    for k in 1..nbins {
        let a: f64 = StandardNormal.sample(&mut rng);
        let b: f64 = StandardNormal.sample(&mut rng);
        let sigma = (n as f64 * fs * psd.value(k as f64 * df) / 4.0).sqrt();
        spec.push(Complex64::new(sigma * a, sigma * b));
    }
    fft::irfft(&spec, n)
}

/// Two independent noise channels for one segment.
pub fn generate_noise(
    n: usize,
    fs: f64,
    t0: f64,
    psd: &PsdModel,
    seed: u64,
) -> Result<[SampledSeries; 2]> {
    if !(fs > 0.0) {
        return Err(Error::param(format!("sampling rate must be positive, got {fs}")));
    }
    let make = |channel: u64| {
        SampledSeries::new(colored_noise(n, fs, psd, derive_seed(&[seed, channel])), t0, 1.0 / fs)
    };
    Ok([make(0)?, make(1)?])
}
