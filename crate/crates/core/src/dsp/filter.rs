use crate::error::{Error, Result};

/// Running median over an odd window, treating samples beyond either end as zero.
pub fn median_filter(x: &[f64], kernel: usize) -> Result<Vec<f64>> {
    if kernel == 0 || kernel % 2 == 0 {
        return Err(Error::param(format!("median filter kernel must be odd, got {kernel}")));
    }
    let n = x.len();
    let h = kernel / 2;
    let at = |i: isize| -> f64 {
        if i < 0 || i as usize >= n {
            0.0
        } else {
            x[i as usize]
        }
    };
    let mut window: Vec<f64> = (-(h as isize)..=h as isize).map(at).collect();
    window.sort_by(f64::total_cmp);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        out.push(window[h]);
        let leaving = at(i as isize - h as isize);
        let entering = at(i as isize + h as isize + 1);
        if leaving.to_bits() == entering.to_bits() {
            continue;
        }
        let pos = window.partition_point(|v| v.total_cmp(&leaving).is_lt());
        window.remove(pos);
        let pos = window.partition_point(|v| v.total_cmp(&entering).is_lt());
        window.insert(pos, entering);
    }
    Ok(out)
}

fn check_savgol(window: usize, polyorder: usize, deriv: usize) -> Result<()> {
    if window % 2 == 0 {
        return Err(Error::param(format!("savgol window must be odd, got {window}")));
    }
    if polyorder >= window {
        return Err(Error::param(format!(
            "savgol polyorder {polyorder} must be less than window {window}"
        )));
    }
    if deriv > polyorder {
        return Err(Error::param(format!(
            "savgol derivative order {deriv} exceeds polyorder {polyorder}"
        )));
    }
    Ok(())
}

/// Weights `w` such that `sum_j w[j] * y[j]` is the `deriv`-th derivative at
/// offset zero of the least-squares polynomial through `(offsets[j], y[j])`.
fn lsq_weights(offsets: &[f64], polyorder: usize, deriv: usize, delta: f64) -> Vec<f64> {
    let p = polyorder + 1;
    let s = offsets.iter().fold(1.0f64, |m, o| m.max(o.abs()));
    let u: Vec<f64> = offsets.iter().map(|o| o / s).collect();
    // normal equations in scaled coordinates
    let mut g = vec![vec![0.0; p + 1]; p];
    for &uk in &u {
        let mut pw = vec![1.0; 2 * p - 1];
        for e in 1..pw.len() {
            pw[e] = pw[e - 1] * uk;
        }
        for (i, row) in g.iter_mut().enumerate() {
            for j in 0..p {
                row[j] += pw[i + j];
            }
        }
    }
    let fact: f64 = (1..=deriv).map(|v| v as f64).product();
    g[deriv][p] = fact / (delta * s).powi(deriv as i32);
    let z = solve(g);
    u.iter()
        .map(|&uk| {
            let mut acc = 0.0;
            let mut pw = 1.0;
            for zi in &z {
                acc += zi * pw;
                pw *= uk;
            }
            acc
        })
        .collect()
}

/// Gaussian elimination with partial pivoting on an augmented matrix.
fn solve(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap_or(col);
        a.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..=n {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    let mut z = vec![0.0; n];
    for r in (0..n).rev() {
        let tail: f64 = (r + 1..n).map(|c| a[r][c] * z[c]).sum();
        z[r] = (a[r][n] - tail) / a[r][r];
    }
    z
}

/// Savitzky-Golay weights for the centred window, indexed by offset
/// `-(window/2) ..= window/2`.
pub fn savgol_coeffs(window: usize, polyorder: usize, deriv: usize, delta: f64) -> Result<Vec<f64>> {
    check_savgol(window, polyorder, deriv)?;
    let h = (window / 2) as f64;
    let offsets: Vec<f64> = (0..window).map(|k| k as f64 - h).collect();
    Ok(lsq_weights(&offsets, polyorder, deriv, delta))
}

/// Savitzky-Golay smoothing / differentiation.
///
/// Interior points use the centred least-squares weights; the first and last
/// `window/2` points are taken from a polynomial fitted to the first and last
/// full window respectively.
pub fn savgol_filter(
    x: &[f64],
    window: usize,
    polyorder: usize,
    deriv: usize,
    delta: f64,
) -> Result<Vec<f64>> {
    let w = savgol_coeffs(window, polyorder, deriv, delta)?;
    let n = x.len();
    if n < window {
        return Err(Error::param(format!(
            "savgol window {window} exceeds input length {n}"
        )));
    }
    let h = window / 2;
    let mut out = vec![0.0; n];
    for i in h..n - h {
        out[i] = w.iter().zip(&x[i - h..=i + h]).map(|(a, b)| a * b).sum();
    }
    let edge = |p: usize| -> Vec<f64> {
        let offsets: Vec<f64> = (0..window).map(|j| j as f64 - p as f64).collect();
        lsq_weights(&offsets, polyorder, deriv, delta)
    };
    for p in 0..h {
        let wl = edge(p);
        out[p] = wl.iter().zip(&x[..window]).map(|(a, b)| a * b).sum();
        let q = window - h + p;
        let wr = edge(q);
        out[n - h + p] = wr.iter().zip(&x[n - window..]).map(|(a, b)| a * b).sum();
    }
    Ok(out)
}
