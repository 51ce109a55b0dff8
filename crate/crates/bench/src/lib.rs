//! Scenario runner for the `scaledsgd` solvers.

pub mod builtin;
pub mod error;
pub mod output;
pub mod runner;
pub mod scenario;

pub use error::BenchError;
pub use runner::{resolve, run, RunOptions, Summary};
pub use scenario::{Scale, Scenario};
