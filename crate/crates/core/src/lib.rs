//! Seismic vulnerability workbench: vulnerability index and damage functions,
//! cadastral ingest, typologies and sampling, spatial aggregation, map export
//! and project persistence.

pub mod domain;
pub mod error;
pub mod geo;
pub mod ingest;
pub mod masters;
pub mod risk;
pub mod scenario;
pub mod store;
pub mod typology;
pub mod workflow;

#[cfg(test)]
mod fixtures;

pub use domain::*;
pub use error::{Error, ErrorClass, Result};
