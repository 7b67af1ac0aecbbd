//! Sketch kernels, sum-product network learning and inference, and join
//! cardinality estimation over cross-correlated sketches.
//!
//! The crate is `no_std` (it needs `alloc`). Everything that touches files,
//! CSV, JSON or the command line lives in the `sspn` companion crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod attrs;
pub mod cluster;
pub mod error;
pub mod estimator;
pub mod fft;
pub mod hashing;
pub mod infer;
pub mod learn;
mod linalg;
pub mod model;
pub mod predicate;
pub mod query;
pub mod rdc;
pub mod rng;
pub mod sketch;
pub mod spn;
pub mod table;

pub use error::{Error, Result};
