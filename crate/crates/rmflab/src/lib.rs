//! Random multiplicative functions with divisor twists, truncated Euler-product
//! fields, barrier random walks and the Monte Carlo estimators built on them.

// `!(x >= 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod arith;
pub mod cli;
pub mod error;
pub mod field;
pub mod moments;
pub mod primes;
pub mod rng;
pub mod stats;
pub mod walks;

mod num;

pub use error::{Error, Result};
