//! Streaming pump-and-dump detection on exchange trade tapes.
//!
//! Trades are folded into per-millisecond rush orders and fixed-width chunks,
//! summarized by moving-window statistics, and scored by a random forest,
//! a logistic regression or a single-feature threshold. An hourly
//! candlestick baseline is provided for comparison.
// `!(x > y)` is used on purpose so NaN takes the rejecting branch
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod domain;
pub mod cli;
pub mod featurize;
pub mod eval;
pub mod ingest;
pub mod models;
pub mod replay;

pub use domain::*;
