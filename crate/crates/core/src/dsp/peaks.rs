/// Selection criteria for [`find_peaks`]; `None` disables a criterion.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PeakParams {
    pub height: Option<f64>,
    pub distance: Option<usize>,
    pub prominence: Option<f64>,
}

/// Local maxima, with flat plateaus reported at their midpoint (rounded down).
fn local_maxima(x: &[f64]) -> Vec<usize> {
    let n = x.len();
    let mut peaks = Vec::new();
    if n < 3 {
        return peaks;
    }
    let i_max = n - 1;
    let mut i = 1;
    while i < i_max {
        if x[i - 1] < x[i] {
            let mut ahead = i + 1;
            while ahead < i_max && x[ahead] == x[i] {
                ahead += 1;
            }
            if x[ahead] < x[i] {
                peaks.push((i + ahead - 1) / 2);
                i = ahead;
            }
        }
        i += 1;
    }
    peaks
}

/// Drops peaks closer than `distance` samples to a higher-priority peak.
/// Priority is the peak value; equal values favour the earlier index.
fn select_by_distance(x: &[f64], peaks: &[usize], distance: usize) -> Vec<usize> {
    let m = peaks.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| x[peaks[b]].total_cmp(&x[peaks[a]]).then(a.cmp(&b)));
    let mut keep = vec![true; m];
    for &j in &order {
        if !keep[j] {
            continue;
        }
        let mut k = j;
        while k > 0 && peaks[j] - peaks[k - 1] < distance {
            keep[k - 1] = false;
            k -= 1;
        }
        let mut k = j + 1;
        while k < m && peaks[k] - peaks[j] < distance {
            keep[k] = false;
            k += 1;
        }
    }
    peaks.iter().zip(keep).filter(|(_, k)| *k).map(|(&p, _)| p).collect()
}

/// Topographic prominence of each peak: its height above the higher of the two
/// lowest points reached before meeting a strictly higher sample (or the end of
/// the signal) on either side.
pub fn peak_prominences(x: &[f64], peaks: &[usize]) -> Vec<f64> {
    peaks
        .iter()
        .map(|&p| {
            let v = x[p];
            let mut left_min = v;
            let mut i = p;
            loop {
                if x[i] > v {
                    break;
                }
                left_min = left_min.min(x[i]);
                if i == 0 {
                    break;
                }
                i -= 1;
            }
            let mut right_min = v;
            for &xi in &x[p..] {
                if xi > v {
                    break;
                }
                right_min = right_min.min(xi);
            }
            v - left_min.max(right_min)
        })
        .collect()
}

/// Peak picking with height, minimum-separation and prominence criteria,
/// applied in that order. Returns strictly increasing indices.
pub fn find_peaks(x: &[f64], params: PeakParams) -> Vec<usize> {
    let mut peaks = local_maxima(x);
    if let Some(h) = params.height {
        peaks.retain(|&p| x[p] >= h);
    }
    if let Some(d) = params.distance {
        if d > 1 && peaks.len() > 1 {
            peaks = select_by_distance(x, &peaks, d);
        }
    }
    if let Some(pmin) = params.prominence {
        let prom = peak_prominences(x, &peaks);
        peaks = peaks.into_iter().zip(prom).filter(|(_, p)| *p >= pmin).map(|(i, _)| i).collect();
    }
    peaks
}
