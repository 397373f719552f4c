//! Muscle-triad morphology and locomotion-control co-design on a planar
//! musculoskeletal walker.

pub mod biomech;
pub mod coopt;
pub mod error;
pub mod harness;
pub mod muscle;
pub mod spectral;

pub use error::{Result, SdeError};
