use std::sync::OnceLock;

use super::dsl::{parse_dsl, PipelineDsl};
use super::stages::run_dsl;
use super::DetectionCatalog;
use crate::dsp::SampledSeries;
use crate::error::Result;

/// The three-stage baseline: Welch whitening, mean spectrogram power, simple peak picking.
pub const SEED_DSL: &str = "\
\"\"\"Welch-whitened strain, frequency-averaged spectrogram power, median-relative peak picking.\"\"\"
detrend_none()
whiten_welch(nperseg=4096, overlap=0.5, smooth=32)
metric_meanpower(nperseg=256, noverlap=128)
trigger_basic(height=1.0, distance=2, prominence=0.3, var=10.0)
";

/// The evolved four-stage reference pipeline.
pub const ELITE_DSL: &str = "\
\"\"\"Median detrending, adaptive gain whitening, regularised phase-coherence metric, MAD thresholds with wavelet validation.\"\"\"
detrend_median(kernel=101)
whiten_adaptive(default)
metric_coherent(default)
trigger_multires(default)
";

pub fn seed_dsl() -> &'static PipelineDsl {
    static P: OnceLock<PipelineDsl> = OnceLock::new();
    P.get_or_init(|| parse_dsl(SEED_DSL).expect("seed pipeline text is valid"))
}

pub fn elite_dsl() -> &'static PipelineDsl {
    static P: OnceLock<PipelineDsl> = OnceLock::new();
    P.get_or_init(|| parse_dsl(ELITE_DSL).expect("elite pipeline text is valid"))
}

pub fn seed_pipeline(h1: &SampledSeries, l1: &SampledSeries) -> Result<DetectionCatalog> {
    run_dsl(seed_dsl(), h1, l1)
}

pub fn elite_pipeline(h1: &SampledSeries, l1: &SampledSeries) -> Result<DetectionCatalog> {
    run_dsl(elite_dsl(), h1, l1)
}

/// Resolves the built-in aliases `seed` and `elite`.
pub fn builtin(name: &str) -> Option<&'static PipelineDsl> {
    match name {
        "seed" => Some(seed_dsl()),
        "elite" => Some(elite_dsl()),
        _ => None,
    }
}
