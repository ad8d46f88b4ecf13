//! Search layer for gwevo: a Monte Carlo tree over candidate pipelines,
//! population operators that build generator requests, prompt rendering,
//! generator clients and post-run analysis.

pub mod analysis;
pub mod evaluator;
pub mod evolve;
pub mod genclient;
pub mod prompts;
pub mod tree;
