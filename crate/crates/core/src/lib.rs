//! Data-driven modeling of cyber-physical systems.
//!
//! Environments supply data, transforms prepare it, learners turn it into
//! models, and strategies drive the whole loop. Metrics score models
//! against held-out observations.

mod error;

pub mod data;
pub mod environments;
pub mod learners;
pub mod metrics;
pub mod remote;
pub mod strategies;
pub mod transforms;

pub use error::{Error, Result};
