//! Post-hoc probability calibration driven by proximity-based conformal
//! stratification.
//!
//! Samples whose local conformal prediction set is a singleton matching the
//! predicted label are treated as putatively correct and calibrated with a
//! standard one-vs-rest isotonic calibrator. Everything else goes through an
//! isotonic calibrator whose targets are pulled toward the uniform
//! distribution, which raises predictive entropy where the model is likely
//! wrong.
//!
//! The crate is `no_std` (with `alloc`). File formats, the command line and
//! reporting live in the `dualcal` companion crate.
#![no_std]
#![deny(rust_2018_idioms)]
#![warn(missing_debug_implementations)]
// `!(a <= b)` is the NaN-rejecting form of `a > b`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

extern crate alloc;

pub mod conformal;
pub mod data;
pub mod error;
pub mod experiment;
pub mod isotonic;
pub mod metrics;
pub mod pipeline;
mod special;
pub mod split;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};

/// Version of this crate, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
