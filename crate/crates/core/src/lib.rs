//! Random Boyd–Wong-type contractions on finite-atom random normed modules:
//! operators, quasi-metrics, gauge checks, a Picard solver and a hypothesis
//! checker.

pub mod boyd_wong;
pub mod checker;
pub mod commands;
pub mod error;
pub mod operators;
pub mod prob_space;
pub mod quasi_metrics;
pub mod report;
pub mod rn_module;
pub mod scenario;
pub mod solver;

pub use error::{Error, Result};
