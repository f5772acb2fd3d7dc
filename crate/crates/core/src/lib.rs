//! Digit-frequency counting benchmark.
//!
//! Given a fixed-width decimal number, predict how many times each digit
//! 0..=9 occurs in it. The crate generates the synthetic datasets, trains
//! multi-output CART trees, bagged random forests and dense ReLU networks
//! from scratch, and evaluates them with RMSE, MAE and rounded accuracy.

pub mod cart;
pub mod data;
pub mod error;
pub mod forest;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod seed;

pub use error::{Error, Result};

/// Width of every label and prediction vector: one entry per decimal digit.
pub const OUTPUTS: usize = 10;
