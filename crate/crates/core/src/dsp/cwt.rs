use std::f64::consts::PI;

use super::numeric::convolve_same;
use crate::error::{Error, Result};

/// Ricker ("Mexican hat") wavelet of width `a` sampled at `points` positions
/// centred on the middle of the support.
pub fn ricker(points: usize, a: f64) -> Vec<f64> {
    let amp = 2.0 / ((3.0 * a).sqrt() * PI.powf(0.25));
    let wsq = a * a;
    let centre = (points as f64 - 1.0) / 2.0;
    (0..points)
        .map(|k| {
            let v = k as f64 - centre;
            let xsq = v * v;
            amp * (1.0 - xsq / wsq) * (-xsq / (2.0 * wsq)).exp()
        })
        .collect()
}

/// Continuous wavelet transform with Ricker wavelets, one row per width.
///
/// Row `s` is the same-length convolution of `x` with a wavelet supported on
/// `min(10 * width, len(x))` samples. Fails on non-finite input.
pub fn ricker_cwt(x: &[f64], widths: &[f64]) -> Result<Vec<Vec<f64>>> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::eval("cwt: non-finite input"));
    }
    widths
        .iter()
        .map(|&w| {
            if !(w > 0.0) {
                return Err(Error::param(format!("cwt: width must be positive, got {w}")));
            }
            if x.is_empty() {
                return Ok(Vec::new());
            }
            let points = ((10.0 * w) as usize).clamp(1, x.len());
            let mut kernel = ricker(points, w);
            kernel.reverse();
            Ok(convolve_same(x, &kernel))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wavelet_values() {
        let w = ricker(5, 1.0);
        let amp = 2.0 / (3.0f64.sqrt() * PI.powf(0.25));
        assert!((w[2] - amp).abs() < 1e-15);
        assert!(w[1].abs() < 1e-15);
        assert!((w[0] - amp * -3.0 * (-2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn reference_rows() {
        // Direct evaluation of the wavelet formula and numpy 'same' convolution.
        let x = [0.0, 1.0, 3.0, 7.0, 2.0, -1.0, 0.5, 0.0, 4.0];
        let c = ricker_cwt(&x, &[1.0, 2.0]).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].len(), x.len());
        let expected = [
            (0, 3, 6.032_735_049_261_946),
            (0, 5, -3.876_228_991_167_732),
            (0, 8, 3.361_582_991_438_221_6),
            (1, 0, -1.834_261_542_067_41),
            (1, 3, 6.198_202_692_591_828_5),
        ];
        for (r, i, v) in expected {
            assert!((c[r][i] - v).abs() < 1e-12, "{} vs {v}", c[r][i]);
        }
    }

    #[test]
    fn zero_input_zero_output() {
        let c = ricker_cwt(&[0.0; 16], &[1.0, 3.0]).unwrap();
        assert!(c.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_non_finite() {
        assert!(ricker_cwt(&[1.0, f64::NAN, 2.0], &[1.0]).is_err());
    }
}
