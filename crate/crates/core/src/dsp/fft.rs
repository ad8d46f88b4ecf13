//! Real FFT helpers with numpy `rfft` / `irfft` conventions.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn forward_plan(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n))
}

fn inverse_plan(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n))
}

/// Unnormalized forward transform of a real sequence; returns bins `0..=n/2`.
pub fn rfft(x: &[f64]) -> Vec<Complex64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    forward_plan(n).process(&mut buf);
    buf.truncate(n / 2 + 1);
    buf
}

/// Inverse of [`rfft`] producing `n` real samples, scaled by `1/n`.
///
/// Bins beyond `n/2` are ignored and missing bins are treated as zero. The
/// imaginary parts of the DC bin (and the Nyquist bin for even `n`) do not
/// contribute, as in numpy.
pub fn irfft(spec: &[Complex64], n: usize) -> Vec<f64> {
    if n == 0 {
        return Vec::new();
    }
    let half = n / 2;
    let bin = |k: usize| spec.get(k).copied().unwrap_or_default();
    let mut buf = vec![Complex64::default(); n];
    buf[0] = bin(0);
    for k in 1..=half {
        let v = bin(k);
        buf[k] = v;
        if k != n - k {
            buf[n - k] = v.conj();
        }
    }
    inverse_plan(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    buf.iter().map(|c| c.re * scale).collect()
}

/// Frequencies of the [`rfft`] bins for `n` samples spaced `dt` apart.
pub fn rfftfreq(n: usize, dt: f64) -> Vec<f64> {
    let step = 1.0 / (n as f64 * dt);
    (0..=n / 2).map(|k| k as f64 * step).collect()
}

/// Full complex forward transform, in place.
pub fn fft_in_place(buf: &mut [Complex64]) {
    if !buf.is_empty() {
        forward_plan(buf.len()).process(buf);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_odd_and_even() {
        for n in [2usize, 7, 8, 33, 64] {
            let x: Vec<f64> = (0..n).map(|i| ((i * 37 % 11) as f64).sin()).collect();
            let y = irfft(&rfft(&x), n);
            for (a, b) in x.iter().zip(&y) {
                assert!((a - b).abs() < 1e-12, "n={n}");
            }
        }
    }

    #[test]
    fn matches_numpy_on_small_input() {
        // np.fft.rfft([1, 2, 0, -1, 3])
        let spec = rfft(&[1.0, 2.0, 0.0, -1.0, 3.0]);
        let expected = [
            (5.0, 0.0),
            (3.354_101_966_249_684_7, 0.363_271_264_002_680_4),
            (-3.354_101_966_249_684_7, 1.538_841_768_587_626_6),
        ];
        for (c, (re, im)) in spec.iter().zip(expected) {
            assert!((c.re - re).abs() < 1e-12 && (c.im - im).abs() < 1e-12);
        }
    }

    #[test]
    fn irfft_ignores_imaginary_dc() {
        let mut spec = rfft(&[1.0, -2.0, 4.0, 0.5]);
        let base = irfft(&spec, 4);
        spec[0].im = 3.0;
        spec[2].im = -1.0;
        assert_eq!(irfft(&spec, 4), base);
    }

    #[test]
    fn rfftfreq_axis() {
        assert_eq!(rfftfreq(8, 0.5), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(rfftfreq(5, 1.0).len(), 3);
    }
}
