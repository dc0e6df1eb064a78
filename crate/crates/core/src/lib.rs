//! Adaptive finite elements for discrete harmonic fields on planar domains
//! with holes.

pub mod afem;
pub mod cli;
pub mod config;
pub mod error;
pub mod estimator;
pub mod harmonic;
pub mod mesh;
pub mod output;
pub mod sparse;
pub mod verify;
pub mod whitney;

pub use error::{Error, Result};
