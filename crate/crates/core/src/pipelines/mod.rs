//! Detection pipelines: every candidate maps two strain channels to a
//! [`DetectionCatalog`]. Candidates are written in a small stage language
//! ([`dsl`]); the two reference pipelines are canonical programs in it.

mod catalog;
pub mod dsl;
mod reference;
mod stages;

pub use catalog::DetectionCatalog;
pub use dsl::{parse_dsl, DslError, PipelineDsl, Role, Stage};
pub use reference::{builtin, elite_dsl, elite_pipeline, seed_dsl, seed_pipeline, ELITE_DSL, SEED_DSL};
pub use stages::run_dsl;
