//! Benchmark scoring: trigger-injection matching, false-alarm and sensitivity
//! curves, and the area-under-curve fitness.

mod curves;
mod evaluate;
mod matching;

pub use curves::{auc_fitness, far_curve, sensitivity_curve, EvalResult, FarRange, SECONDS_PER_MONTH};
pub use evaluate::{evaluate_segments, Evaluation, SegmentCatalogs};
pub use matching::{match_events, MAX_TIME_OFFSET};
