//! Analog inverse design: performance-driven topology selection, an
//! edge-centric graph surrogate of circuit performance, and layout-aware
//! gradient-based parameter inference over that surrogate.
//!
//! The crate is `no_std` (it needs `alloc`). Everything that touches files,
//! JSON or the command line lives in the companion `invdes` crate.

#![no_std]
#![deny(unsafe_code)]
// `!(x > 0.0)` is the NaN-rejecting check used throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod circuit;
pub mod classifier;
pub mod dataset;
pub mod design;
pub mod diffnum;
mod error;
pub mod forward;
pub mod layout;
pub mod metrics;
pub mod oracle;
pub mod units;

pub use error::{Error, Result};
pub use metrics::{Metric, MetricMask, PerformanceVector, METRIC_COUNT};
