//! Monte Carlo simulator and analytics for photon-counting optical time
//! domain reflectometry with gated InGaAs/InP avalanche photodiodes.
//!
//! Units: distance in km, time in s, optical power in W. Trace values are
//! 5·log10 power ratios (the light travels the fiber twice).

// Validation is written as `!(x > 0.0)` so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod detector;
pub mod engine;
pub mod error;
pub mod fiber;
pub mod rng;
pub mod schemes;
pub mod units;

pub use error::{Error, Result};
