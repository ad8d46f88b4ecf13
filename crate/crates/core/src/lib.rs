//! Core numerics for gwevo: deterministic DSP primitives, synthetic two-detector
//! strain with chirp injections, the reference detection pipelines with their
//! stage DSL, and the sensitivity / false-alarm-rate benchmark used as the
//! search objective.
//!
//! Everything in this crate is a pure function of its inputs. Batch evaluation
//! over segments runs data-parallel when the `parallel` feature is enabled and
//! falls back to a sequential loop otherwise; both paths produce bit-identical
//! results.

pub mod datagen;
pub mod dsp;
pub mod error;
pub mod parallel;
pub mod pipelines;
pub mod scoring;

pub use error::{Error, Result};
