//! Benchmark harness: canned experiments, reference solutions, trace output.

pub mod experiments;

pub use experiments::{ProblemConfig, build_heat_problem, build_signal_problem};
