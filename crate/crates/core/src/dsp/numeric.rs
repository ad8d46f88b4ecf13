//! Small array routines with numpy semantics.

/// Median, averaging the two central values for even lengths. `NaN` for empty input.
pub fn median(x: &[f64]) -> f64 {
    let n = x.len();
    if n == 0 {
        return f64::NAN;
    }
    let mut v = x.to_vec();
    let mid = n / 2;
    let (lo, m, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *m;
    if n % 2 == 1 {
        upper
    } else {
        let lower = lo.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lower + upper) / 2.0
    }
}

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Discrete linear convolution, `'same'` mode: output has the length of the
/// longer input and is centred on the full convolution.
pub fn convolve_same(a: &[f64], v: &[f64]) -> Vec<f64> {
    let (x, k) = if a.len() >= v.len() { (a, v) } else { (v, a) };
    let n = x.len();
    let m = k.len();
    if m == 0 {
        return Vec::new();
    }
    let offset = (m - 1) / 2;
    (0..n)
        .map(|i| {
            // full index i + offset
            let full = i + offset;
            let j_lo = full.saturating_sub(n - 1);
            let j_hi = full.min(m - 1);
            (j_lo..=j_hi).map(|j| k[j] * x[full - j]).sum()
        })
        .collect()
}

/// Piecewise-linear interpolation of `(xp, fp)` at `x`; values outside the
/// table are clamped to the end values. `xp` must be increasing.
pub fn interp(x: &[f64], xp: &[f64], fp: &[f64]) -> Vec<f64> {
    assert_eq!(xp.len(), fp.len());
    assert!(!xp.is_empty());
    let last = xp.len() - 1;
    let mut j = 0usize;
    x.iter()
        .map(|&xi| {
            if xi <= xp[0] {
                return fp[0];
            }
            if xi >= xp[last] {
                return fp[last];
            }
            // x is usually sorted; fall back to a search when it is not
            if xi < xp[j] {
                j = xp.partition_point(|&p| p <= xi) - 1;
            }
            while xp[j + 1] <= xi {
                j += 1;
            }
            let slope = (fp[j + 1] - fp[j]) / (xp[j + 1] - xp[j]);
            slope * (xi - xp[j]) + fp[j]
        })
        .collect()
}

/// Second-order central differences in the interior, first-order one-sided at
/// the ends, unit spacing.
pub fn gradient(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n)
            .map(|i| {
                if i == 0 {
                    x[1] - x[0]
                } else if i == n - 1 {
                    x[n - 1] - x[n - 2]
                } else {
                    (x[i + 1] - x[i - 1]) / 2.0
                }
            })
            .collect(),
    }
}

pub fn diff(x: &[f64]) -> Vec<f64> {
    x.windows(2).map(|w| w[1] - w[0]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn convolve_same_offsets() {
        // np.convolve([1,2,3,4,5], np.ones(4)/4, 'same')
        let y = convolve_same(&[1.0, 2.0, 3.0, 4.0, 5.0], &[0.25; 4]);
        assert_eq!(y, vec![0.75, 1.5, 2.5, 3.5, 3.0]);
        // np.convolve([1,2], [1,1,1], 'same')
        assert_eq!(convolve_same(&[1.0, 2.0], &[1.0, 1.0, 1.0]), vec![1.0, 3.0, 3.0]);
        // np.convolve([1,2,3], [0,1,0.5], 'same')
        assert_eq!(convolve_same(&[1.0, 2.0, 3.0], &[0.0, 1.0, 0.5]), vec![1.0, 2.5, 4.0]);
    }

    #[test]
    fn interp_clamps_and_interpolates() {
        let y = interp(&[-1.0, 0.0, 0.5, 2.0, 9.0, 1.5], &[0.0, 1.0, 2.0], &[10.0, 20.0, 40.0]);
        assert_eq!(y, vec![10.0, 10.0, 15.0, 40.0, 40.0, 30.0]);
    }

    #[test]
    fn gradient_edges() {
        assert_eq!(gradient(&[1.0, 4.0, 9.0, 16.0]), vec![3.0, 4.0, 6.0, 7.0]);
        assert_eq!(gradient(&[2.0]), vec![0.0]);
    }
}
