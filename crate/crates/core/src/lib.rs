//! Sparse temporal transitions for disentanglement.

pub mod dists;
pub mod error;
pub mod estimators;
pub mod gradcore;
pub mod harness;
pub mod metrics;
pub mod natstats;
pub mod rng;
pub mod synthgen;

pub use error::{Error, Result};
