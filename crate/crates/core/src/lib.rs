//! Set-indexed fractional Brownian motion over rectangles `[0, t]` and weighted
//! grid lower layers: covariance kernels, exact Gaussian sampling, projections
//! along flows, and executable checks of the process's defining identities.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod covariance;
pub mod error;
pub mod flows;
pub mod linalg;
pub mod properties;
pub mod rng;
pub mod sampler;
pub mod set_families;

pub use error::{Error, Result};
