//! Uniformly compressing mean curvature flow of closed curves.

// NaN-rejecting comparisons are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod flow;
pub mod grid_curve;
pub mod linalg;
pub mod par;
pub mod presets;
pub mod renorm;
pub mod runner;
pub mod stationary;
pub mod tension;

pub use error::{Error, Result};
pub use grid_curve::{CircleFit, GridCurve};
