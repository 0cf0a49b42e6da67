//! Numerical laboratory for entangled bilinear averages.
//!
//! Modules build on each other bottom-up: [`fields`] holds sampled grids and
//! deterministic ensembles, [`kernels`] constructs the one-variable kernels and
//! multiplier symbols, [`averages`] evaluates every averaging operator,
//! [`variation`] measures ϱ-variation and jump counts, and [`forms`] evaluates
//! the quadrilinear forms together with their exact identities.

pub mod averages;
pub mod error;
pub mod fields;
pub mod forms;
pub mod kernels;
pub mod numerics;
pub mod variation;

pub use error::{Result, VarioError};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
