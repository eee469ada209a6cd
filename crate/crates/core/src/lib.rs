//! Identification of single- and multiple-line outages in a power network
//! observed by a limited set of PMUs.
//!
//! The pipeline builds an AC power-flow angle sensitivity map (the outage
//! signature map), recovers the sparse set of tripped lines with a LARS lasso
//! path, and widens the answer with minimal diagnosable clusters of lines whose
//! signatures the PMU placement cannot tell apart. [`bench`] reproduces the
//! Monte-Carlo evaluation protocol with DC and correlation baselines.

pub mod bench;
pub mod error;
pub mod lars;
pub mod mdc;
pub mod netmodel;
#[cfg(any(test, feature = "test-oracles"))]
pub mod oracle;
pub mod powerflow;
pub mod sigmap;

pub use error::{Error, Result};
