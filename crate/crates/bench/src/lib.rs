//! Benchmark harness: scene generation, training, seen/unseen evaluation,
//! ablations, inference timing and report tables.

pub mod error;
pub mod experiment;
pub mod report;
pub mod rows;
pub mod scenes;

pub use error::{BenchError, Result};
