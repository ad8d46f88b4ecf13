use serde::{Deserialize, Serialize};

use super::matching::match_events;
use crate::datagen::InjectionRecord;
use crate::error::{Error, Result};
use crate::pipelines::DetectionCatalog;

/// Thirty days in seconds.
pub const SECONDS_PER_MONTH: f64 = 2.592e6;

/// Range of false-alarm rates (events per month) over which sensitivity is integrated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FarRange {
    pub min: f64,
    pub max: f64,
}

impl Default for FarRange {
    fn default() -> Self {
        FarRange { min: 4.0, max: 1000.0 }
    }
}

/// Threshold sweep and its integral.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub auc: f64,
    pub far: Vec<f64>,
    pub d_sens: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub wall_time: f64,
    pub error_trials: u32,
    /// No background trigger fell inside the integration range.
    #[serde(default)]
    pub degenerate: bool,
}

/// Background triggers at or above each threshold, per month.
pub fn far_curve(background: &DetectionCatalog, duration: f64, thresholds: &[f64]) -> Result<Vec<f64>> {
    if !(duration > 0.0) {
        return Err(Error::param(format!("background duration must be positive, got {duration}")));
    }
    let mut stats = background.stats.clone();
    stats.sort_by(f64::total_cmp);
    Ok(thresholds
        .iter()
        .map(|&th| {
            let below = stats.partition_point(|&s| s < th);
            (stats.len() - below) as f64 / duration * SECONDS_PER_MONTH
        })
        .collect())
}

/// Sensitive distance `d_max * p^(1/3)` per threshold, where `p` is the
/// fraction of injections matched with a statistic at or above it.
pub fn sensitivity_curve(matched: &[Option<f64>], d_max: f64, thresholds: &[f64]) -> Result<Vec<f64>> {
    if matched.is_empty() {
        return Err(Error::param("sensitivity needs at least one injection"));
    }
    let mut found: Vec<f64> = matched.iter().flatten().copied().collect();
    found.sort_by(f64::total_cmp);
    let total = matched.len() as f64;
    Ok(thresholds
        .iter()
        .map(|&th| {
            let detected = found.len() - found.partition_point(|&s| s < th);
            d_max * (detected as f64 / total).cbrt()
        })
        .collect())
}

/// Trapezoidal area under `y(x)` restricted to `[lo, hi]`, with linear
/// interpolation where the range cuts a segment. `x` must be increasing.
fn clipped_trapezoid(x: &[f64], y: &[f64], lo: f64, hi: f64) -> f64 {
    let mut area = 0.0;
    for i in 1..x.len() {
        let (x0, x1) = (x[i - 1], x[i]);
        let a = x0.max(lo);
        let b = x1.min(hi);
        if b <= a {
            continue;
        }
        let at = |t: f64| y[i - 1] + (y[i] - y[i - 1]) * (t - x0) / (x1 - x0);
        area += (b - a) * (at(a) + at(b)) / 2.0;
    }
    area
}

/// Area under sensitive distance versus `log10(FAR)` over `range`.
///
/// Thresholds are the distinct background statistics, highest first. The
/// curve is only integrated where background triggers populate it; a
/// candidate without any curve points inside the range scores zero and is
/// marked degenerate.
pub fn auc_fitness(
    background: &DetectionCatalog,
    foreground: &DetectionCatalog,
    truth: &[InjectionRecord],
    background_duration: f64,
    d_max: f64,
    range: FarRange,
) -> Result<EvalResult> {
    let mut thresholds = background.stats.clone();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let far = far_curve(background, background_duration, &thresholds)?;
    let matched = match_events(foreground, truth);
    let d_sens = sensitivity_curve(&matched, d_max, &thresholds)?;

    let (lo, hi) = (range.min.log10(), range.max.log10());
    let xs: Vec<f64> = far.iter().map(|f| f.log10()).collect();
    let in_range = xs.iter().any(|&x| x >= lo && x <= hi)
        || xs.windows(2).any(|w| w[0] < lo && w[1] > hi);
    let (auc, degenerate) = if in_range {
        (clipped_trapezoid(&xs, &d_sens, lo, hi), false)
    } else {
        (0.0, true)
    };
    Ok(EvalResult {
        auc,
        far,
        d_sens,
        thresholds,
        wall_time: 0.0,
        error_trials: 0,
        degenerate,
    })
}
