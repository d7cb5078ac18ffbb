//! Analysis toolkit for single-photon emitters: photon time-tag correlation,
//! rate-equation photophysics with a stochastic simulator, and
//! photoluminescence line-shape fitting with Debye-Waller factor extraction.

// `!(x > 0.0)` guards are deliberate: they also reject NaN. Index loops
// follow the matrix notation of the formulas they implement.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod correlator;
pub mod error;
pub mod fitting;
pub mod parallel;
pub mod photophysics;
pub mod spectral;
pub mod synth;
pub mod ttio;

pub use error::{Error, Result};
