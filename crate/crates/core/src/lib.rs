//! Bias-aware evaluation of prompt-based knowledge probing.
//!
//! The crate encodes the causal graph of the probing procedure, finds and
//! blocks its backdoor paths, computes prompt and verbalization bias
//! diagnostics over prediction grids, and produces backdoor-adjusted ability
//! estimates together with a bootstrap rank-consistency protocol and a
//! synthetic ground-truth simulator.

pub mod cli;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod grid;
pub mod intervention;
pub mod metrics;
pub mod report;
pub mod synthetic;

pub use error::{Error, ErrorClass, Result};

/// Seed used whenever none is given, so runs are reproducible by default.
pub const DEFAULT_SEED: u64 = 42;
