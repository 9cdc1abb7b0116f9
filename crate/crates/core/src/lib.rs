//! Individualized treatment rules estimated from a flexible Bayesian outcome
//! model and distilled into interpretable trees and logistic regressions.

// `!(x > 0.0)` is used deliberately so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod data;
pub mod decision;
pub mod design;
pub mod error;
pub mod eval;
pub mod flex;
pub mod io;
pub mod loss;
pub mod math;
pub mod pipeline;
pub mod rng;
pub mod rule;
pub mod sim;
pub mod simple;

pub use error::{Error, Result};
