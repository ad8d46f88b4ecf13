//! Configuration, search orchestration and reporting for the `gwevo` binary.

pub mod config;
pub mod report;
pub mod run;
