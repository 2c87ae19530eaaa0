//! Exact construction and analysis of locally sampleable distributions over
//! `{0,1}^n`.
//!
//! - [`localfn`]: d-local functions, restriction, degree profiles.
//! - [`dist`]: exact distributions, distances, k-wise diagnostics.
//! - [`samplers`]: local functions that sample the canonical family.
//! - [`mixture`]: coefficient vectors over biased products, evens and odds.
//! - [`decompose`]: parity moments and Vandermonde decomposition.
//! - [`analyze`]: conditioning on high-degree inputs and mixture recovery.
//! - [`learner`]: hypothesis covers and minimum-distance selection.

pub mod analyze;
pub mod decompose;
pub mod dist;
pub mod error;
pub mod exact;
pub mod experiments;
pub mod learner;
pub mod localfn;
pub mod lp;
pub mod mixture;
pub mod rng;
pub mod samplers;

pub use error::{Error, Result};
