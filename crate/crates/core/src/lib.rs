//! Log skew normal approximation to the distribution of a sum of correlated
//! lognormal random variables.
//!
//! The fit matches the exact first two moments of the sum and the slope of
//! its lower tail on lognormal probability paper; see [`fit::fit_lsn`].

// `!(x > 0.0)` is used on purpose: it rejects NaN along with the bad range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// tabulated constants keep all the digits they were published or computed with
#![allow(clippy::excessive_precision)]

pub mod baselines;
pub mod corrstruct;
pub mod dist;
pub mod error;
pub mod fit;
pub mod mc;
pub mod probscale;
mod quad;

pub use error::{Error, Result};

/// ξ = ln(10)/10: natural-log units per dB.
pub const NATS_PER_DB: f64 = std::f64::consts::LN_10 / 10.0;
