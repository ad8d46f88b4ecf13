//! Taper windows.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Window families used by the pipelines.
///
/// Periodic variants are the DFT-even windows used for spectral analysis
/// (`n + 1` symmetric points with the last dropped).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    Rectangular,
    Hann,
    Tukey { alpha: f64 },
    TukeySymmetric { alpha: f64 },
}

impl WindowKind {
    pub fn samples(self, n: usize) -> Vec<f64> {
        match self {
            WindowKind::Rectangular => vec![1.0; n],
            WindowKind::Hann => periodic(n, hann),
            WindowKind::Tukey { alpha } => periodic(n, |m| tukey_window(m, alpha)),
            WindowKind::TukeySymmetric { alpha } => tukey_window(n, alpha),
        }
    }
}

fn periodic(n: usize, sym: impl Fn(usize) -> Vec<f64>) -> Vec<f64> {
    if n <= 1 {
        return vec![1.0; n];
    }
    let mut w = sym(n + 1);
    w.truncate(n);
    w
}

/// Symmetric Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![1.0; n];
    }
    let m = (n - 1) as f64;
    (0..n)
        .map(|k| {
            // cos over an evenly spaced grid on [-pi, pi]
            let phase = -PI + 2.0 * PI * k as f64 / m;
            0.5 + 0.5 * phase.cos()
        })
        .collect()
}

/// Symmetric Tukey (tapered cosine) window: a flat top covering `1 - alpha` of
/// the support with half-cosine tapers on each side.
///
/// `alpha <= 0` gives a rectangular window and `alpha >= 1` a Hann window.
pub fn tukey_window(n: usize, alpha: f64) -> Vec<f64> {
    if n <= 1 {
        return vec![1.0; n];
    }
    if alpha <= 0.0 {
        return vec![1.0; n];
    }
    if alpha >= 1.0 {
        return hann(n);
    }
    let m1 = (n - 1) as f64;
    let width = (alpha * m1 / 2.0).floor() as usize;
    (0..n)
        .map(|k| {
            let kf = k as f64;
            if k <= width {
                0.5 * (1.0 + (PI * (-1.0 + 2.0 * kf / alpha / m1)).cos())
            } else if k < n - width - 1 {
                1.0
            } else {
                0.5 * (1.0 + (PI * (-2.0 / alpha + 1.0 + 2.0 * kf / alpha / m1)).cos())
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn tukey_half_taper_value() {
        let w = tukey_window(8, 0.5);
        let expected = 0.5 * (1.0 + (PI * (2.0 / (0.5 * 7.0) - 1.0)).cos());
        assert!((w[1] - expected).abs() < 1e-15);
        assert!((w[1] - 0.611_260_466_978_157_2).abs() < 1e-12);
        close(
            &w,
            &[0.0, 0.611_260_466_978_157_2, 1.0, 1.0, 1.0, 1.0, 0.611_260_466_978_157_6, 0.0],
            1e-12,
        );
    }

    #[test]
    fn tukey_limits() {
        assert_eq!(tukey_window(9, 0.0), vec![1.0; 9]);
        close(&tukey_window(7, 1.0), &hann(7), 0.0);
        close(&hann(7), &[0.0, 0.25, 0.75, 1.0, 0.75, 0.25, 0.0], 1e-15);
    }

    #[test]
    fn periodic_variants() {
        close(&WindowKind::Hann.samples(6), &[0.0, 0.25, 0.75, 1.0, 0.75, 0.25], 1e-15);
        let t = WindowKind::Tukey { alpha: 0.25 }.samples(16);
        assert_eq!(t.len(), 16);
        close(&t[..3], &[0.0, 0.5, 1.0], 1e-15);
        assert!((t[15] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn degenerate_lengths() {
        assert!(tukey_window(0, 0.5).is_empty());
        assert_eq!(tukey_window(1, 0.5), vec![1.0]);
        assert_eq!(WindowKind::Hann.samples(1), vec![1.0]);
    }
}
