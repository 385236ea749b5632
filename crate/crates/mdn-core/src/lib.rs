//! Conditional density estimation with a deep mixture density network, plus
//! the pieces needed to turn it into an anomaly detector for tabular
//! behavior records: negative-log-likelihood scoring, threshold calibration,
//! ranking metrics, and a deterministic training loop with a five-way
//! optimizer harness.
//!
//! The crate is `no_std`-compatible (`alloc` required). All floating-point
//! transcendentals go through `libm`, so results are bit-identical across
//! platforms and between `std` and `no_std` builds. File formats, CSV
//! ingestion, and the command-line pipeline live in the companion `mdn-cli`
//! crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

#[cfg(feature = "std")]
extern crate std;

pub mod data;
pub mod error;
pub mod math;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod rng;
pub mod score;
pub mod train;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use rng::Rng;
