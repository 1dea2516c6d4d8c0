//! Experiment harness around `dtml-core`: repeated splits, the three-way
//! ablation, two-stage parameter search, decomposition export and the
//! `dtml` command line.

pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;
pub mod export;
pub mod grid;
pub mod model_io;

pub use error::{BenchError, Result};
