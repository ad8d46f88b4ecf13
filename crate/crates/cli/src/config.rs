use std::path::{Path, PathBuf};

use gwevo_core::datagen::DatasetConfig;
use gwevo_core::scoring::FarRange;
use gwevo_search::evaluator::ExternalExecutor;
use gwevo_search::evolve::PopulationConfig;
use gwevo_search::genclient::GeneratorConfig;
use gwevo_search::prompts::CodeMode;
use gwevo_search::tree::TreeConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    #[default]
    Live,
    Mock,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    /// Scored candidates per diversity window.
    pub window: usize,
    /// Best-so-far gain that marks a phase transition.
    pub pt_threshold: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig { window: 50, pt_threshold: 400.0 }
    }
}

/// Everything a run depends on. `init-config` writes the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Evaluations after the seed. Zero records the seed only.
    pub budget: u64,
    /// Search RNG seed (operator inputs, population sampling).
    pub seed: u64,
    /// Concurrent operator executions per batch. 1 is the deterministic mode.
    pub workers: usize,
    pub tree: TreeConfig,
    pub population: PopulationConfig,
    /// Fixed per-level operator schedule; off draws operators at random.
    pub use_schedule: bool,
    pub generator: GeneratorConfig,
    pub backend: Backend,
    /// Mock script; the built-in demo script when absent.
    pub mock_script: Option<PathBuf>,
    /// Synthetic dataset, used when `data_dir` is not set.
    pub dataset: DatasetConfig,
    pub data_dir: Option<PathBuf>,
    /// Wall-clock limit per evaluation (s).
    pub t_max: f64,
    /// Correction rounds after a failed response.
    pub e_max: usize,
    /// Extra requests for an initial variant that failed all corrections.
    pub init_retries: usize,
    pub far_range: FarRange,
    pub code_mode: CodeMode,
    pub executor: Option<ExternalExecutor>,
    /// Directory of template overrides.
    pub templates: Option<PathBuf>,
    pub analysis: AnalysisConfig,
    pub output: PathBuf,
    /// Write `timings.jsonl`. Off by default so that run directories are
    /// reproducible byte for byte.
    pub record_timings: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            budget: 200,
            seed: 0,
            workers: 1,
            tree: TreeConfig::default(),
            population: PopulationConfig::default(),
            use_schedule: true,
            generator: GeneratorConfig::default(),
            backend: Backend::Live,
            mock_script: None,
            dataset: DatasetConfig::default(),
            data_dir: None,
            t_max: 60.0,
            e_max: 3,
            init_retries: 2,
            far_range: FarRange::default(),
            code_mode: CodeMode::Dsl,
            executor: None,
            templates: None,
            analysis: AnalysisConfig::default(),
            output: PathBuf::from("runs/latest"),
            record_timings: false,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("invalid config {path}: {source}")]
    Parse { path: String, source: serde_json::Error },
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.display().to_string(), source })?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|source| ConfigError::Parse { path: path.display().to_string(), source })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if !(self.t_max > 0.0) {
            return bad("t_max must be positive");
        }
        if self.workers == 0 {
            return bad("workers must be at least 1");
        }
        if !(self.far_range.min > 0.0 && self.far_range.min < self.far_range.max) {
            return bad("far_range needs 0 < min < max");
        }
        if self.population.k == 0 || !(self.population.beta >= 0.0) {
            return bad("population needs k >= 1 and beta >= 0");
        }
        if !(0.0..=1.0).contains(&self.tree.gamma) || !(self.tree.epsilon > 0.0) || !(self.tree.c0 >= 0.0) {
            return bad("tree needs gamma in [0, 1], epsilon > 0 and c0 >= 0");
        }
        if self.tree.max_depth == 0 {
            return bad("tree.max_depth must be at least 1");
        }
        if !(self.generator.timeout > 0.0) {
            return bad("generator.timeout must be positive");
        }
        if self.code_mode == CodeMode::External && self.executor.as_ref().is_none_or(|e| e.argv.is_empty()) {
            return bad("code_mode external needs an executor command");
        }
        if self.analysis.window == 0 {
            return bad("analysis.window must be at least 1");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_validate() {
        let c = RunConfig::default();
        c.validate().unwrap();
        let back: RunConfig = serde_json::from_str(&serde_json::to_string_pretty(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(c.generator.temperature, 1.0);
        assert_eq!((c.t_max, c.e_max), (60.0, 3));
    }

    #[test]
    fn partial_files_take_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"budget": 7, "tree": {"gamma": 0.25}}"#).unwrap();
        assert_eq!(c.budget, 7);
        assert_eq!(c.tree.gamma, 0.25);
        assert_eq!(c.tree.max_depth, 10);
        assert_eq!(c.population.k, 10);
    }

    #[test]
    fn rejects_bad_values() {
        let mut c = RunConfig { t_max: 0.0, ..Default::default() };
        assert!(c.validate().is_err());
        c.t_max = 1.0;
        c.code_mode = CodeMode::External;
        assert!(c.validate().is_err());
    }
}
