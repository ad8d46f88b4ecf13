use crate::datagen::InjectionRecord;
use crate::pipelines::DetectionCatalog;

/// Hard cap on the trigger-injection time offset (s).
pub const MAX_TIME_OFFSET: f64 = 0.2;

/// Per-injection matched statistic, in the order of `truth`.
///
/// Each trigger is assigned to the injection nearest in time (ties go to the
/// earlier injection) and counts only if it lies within
/// `min(var, MAX_TIME_OFFSET)` of it. An injection's statistic is the largest
/// among its triggers; `None` means it was missed.
pub fn match_events(catalog: &DetectionCatalog, truth: &[InjectionRecord]) -> Vec<Option<f64>> {
    let mut order: Vec<usize> = (0..truth.len()).collect();
    order.sort_by(|&a, &b| truth[a].t_coal.total_cmp(&truth[b].t_coal).then(a.cmp(&b)));
    let sorted: Vec<f64> = order.iter().map(|&i| truth[i].t_coal).collect();
    let mut matched = vec![None; truth.len()];
    if sorted.is_empty() {
        return matched;
    }
    for i in 0..catalog.len() {
        let t = catalog.times[i];
        let after = sorted.partition_point(|&tc| tc < t);
        let nearest = match (after.checked_sub(1), (after < sorted.len()).then_some(after)) {
            (Some(b), Some(a)) => {
                if (t - sorted[b]).abs() <= (sorted[a] - t).abs() {
                    b
                } else {
                    a
                }
            }
            (Some(b), None) => b,
            (None, Some(a)) => a,
            (None, None) => unreachable!(),
        };
        let tol = catalog.vars[i].min(MAX_TIME_OFFSET);
        if (t - sorted[nearest]).abs() <= tol {
            let slot = &mut matched[order[nearest]];
            let s = catalog.stats[i];
            *slot = Some(slot.map_or(s, |prev: f64| prev.max(s)));
        }
    }
    matched
}
