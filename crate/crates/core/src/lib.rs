//! Regularized calibrated estimation of propensity scores and outcome
//! regressions, and the augmented inverse-probability-weighted estimators
//! built on them.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod estimators;
pub mod losses;
pub mod normal;
pub mod pipeline;
pub mod quadrature;
pub mod selfcheck;
pub mod simulation;
pub mod solver;
pub mod tuning;

pub use error::{Error, Result};
