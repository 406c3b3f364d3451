//! Quality-of-representation metrics and sense/sleep scheduling for
//! spot-sensing wireless sensor networks.
//!
//! - [`geometry`]: regions, layouts, distances and a grid nearest-node index.
//! - [`metrics`]: Monte Carlo estimates of `D` (average representation error)
//!   and `U` (unevenness, a Gini index).
//! - [`targets`]: target distance functions and closed-form reference values.
//! - [`protocol`]: EvenRep, Flip and Sponsored Cover decision rules.
//! - [`engine`]: asynchronous and round-based simulation with energy.
//! - [`harness`]: experiment configs, batch statistics, CSV/SVG output.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod metrics;
pub mod protocol;
pub mod rng;
pub mod targets;

pub use error::{Error, Result};
