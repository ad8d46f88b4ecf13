use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::curves::{auc_fitness, EvalResult, FarRange};
use crate::datagen::{InjectionRecord, Segment};
use crate::dsp::SampledSeries;
use crate::error::{Error, Result};
use crate::parallel::{self, Execution};
use crate::pipelines::DetectionCatalog;

/// Catalogs a candidate produced on one segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentCatalogs {
    pub name: String,
    pub background: DetectionCatalog,
    pub foreground: DetectionCatalog,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub result: EvalResult,
    pub segments: Vec<SegmentCatalogs>,
}

impl Evaluation {
    pub fn background(&self) -> DetectionCatalog {
        DetectionCatalog::concat(self.segments.iter().map(|s| &s.background))
    }

    pub fn foreground(&self) -> DetectionCatalog {
        DetectionCatalog::concat(self.segments.iter().map(|s| &s.foreground))
    }
}

/// Runs `candidate` on the background and foreground strain of every segment
/// and scores the pooled catalogs.
///
/// Segments are processed data-parallel under [`Execution::Parallel`]; the
/// result is identical either way. The first failing segment (in segment
/// order) aborts the evaluation.
pub fn evaluate_segments<F>(
    segments: &[&Segment],
    d_max: f64,
    range: FarRange,
    exec: Execution,
    candidate: F,
) -> Result<Evaluation>
where
    F: Fn(&SampledSeries, &SampledSeries) -> Result<DetectionCatalog> + Sync + Send,
{
    if segments.is_empty() {
        return Err(Error::param("no segments to evaluate on"));
    }
    let start = Instant::now();
    let per_segment = parallel::try_map(exec, segments, |seg| -> Result<SegmentCatalogs> {
        let data = seg.data()?;
        let (bg, fg) = parallel::join(
            exec,
            || candidate(&data.background[0], &data.background[1]),
            || candidate(&data.foreground[0], &data.foreground[1]),
        );
        Ok(SegmentCatalogs { name: seg.info.name.clone(), background: bg?, foreground: fg? })
    })?;
    let background = DetectionCatalog::concat(per_segment.iter().map(|s| &s.background));
    let foreground = DetectionCatalog::concat(per_segment.iter().map(|s| &s.foreground));
    let truth: Vec<InjectionRecord> = segments.iter().flat_map(|s| s.injections.iter().copied()).collect();
    let duration: f64 = segments.iter().map(|s| s.info.duration()).sum();
    let mut result = auc_fitness(&background, &foreground, &truth, duration, d_max, range)?;
    result.wall_time = start.elapsed().as_secs_f64();
    Ok(Evaluation { result, segments: per_segment })
}
